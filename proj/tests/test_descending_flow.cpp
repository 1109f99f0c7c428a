#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"

#include "nodal/descending_flow.hpp"
#include "nodal/linking_minimax.hpp"
#include "nodal/random.hpp"

#include <cmath>
#include <limits>

using namespace nodal;

namespace {

EnergyProblem benchmark(int n = 127) {
    return EnergyProblem(build_space(GridSpec::interval(0.0, 1.0, n)), PiecewisePotential::builtin("power:4"), 1.0);
}

Field unit(const DiscreteSpace& s, int k) { return s.eigenpair(k).vector / s.h1_norm(s.eigenpair(k).vector); }

}  // namespace

TEST_CASE("pseudo-gradient field") {
    const EnergyProblem prob = benchmark(31);
    const DiscreteSpace& s = prob.grid();
    CHECK(pseudo_gradient(prob, s.zeros()).cwiseAbs().maxCoeff() == 0.0);

    const Field u = 3.0 * s.eigenpair(0).vector + s.eigenpair(1).vector;
    const Field g = s.apply_stiffness(u) - s.apply_mass(u.array().pow(3).matrix());
    const Field v = pseudo_gradient(prob, u);
    const Field riesz = s.riesz(g);
    CHECK(std::abs(s.h1_inner(v, riesz)) == doctest::Approx(s.h1_norm(v) * s.h1_norm(riesz)).epsilon(1e-10));

    const EnergyProblem kinked(prob.space, PiecewisePotential::builtin("two_slope:1,2"), 2.0);
    Rng rng(8);
    int noncritical = 0;
    int positive = 0;
    for (int k = 0; k < 1000; ++k) {
        const Field w = rng.normal_vector(s.size()) * std::exp(rng.uniform(-2.0, 2.0));
        const SlopeResult sl = slope(kinked, w);
        if (sl.value <= 1e-12) {
            continue;
        }
        ++noncritical;
        positive += sl.certificate.dot(pseudo_gradient(kinked, w)) > 0.0 ? 1 : 0;
    }
    CHECK(noncritical > 900);
    CHECK(positive == noncritical);
}

TEST_CASE("cutoff functions") {
    const auto s = build_space(GridSpec::interval(0.0, 1.0, 15));
    FlowConfig c;
    c.level = 10.0;
    c.eps = 0.5;
    c.eps_bar = 1.0;
    CHECK(cutoff_rho(c, 10.4) == 1.0);
    CHECK(cutoff_rho(c, 11.0) == 0.0);
    CHECK(cutoff_rho(c, 8.0) == 0.0);
    CHECK(cutoff_rho(c, 10.75) == doctest::Approx(0.5));

    c.delta = 0.2;
    const Field z = s->eigenpair(0).vector;
    c.excised = {z};
    const Field dir = unit(*s, 1);
    CHECK(cutoff_psi(c, *s, z + 1.5 * c.delta * dir) == doctest::Approx(0.5));
    CHECK(cutoff_psi(c, *s, z + 0.5 * c.delta * dir) == 0.0);
    CHECK(cutoff_psi(c, *s, z + 3.0 * c.delta * dir) == 1.0);
}

TEST_CASE("critical start gives a single state") {
    const EnergyProblem prob = benchmark(31);
    const Trajectory t = integrate_flow(prob, prob.grid().zeros(), FlowConfig{});
    CHECK(t.states.size() == 1);
    CHECK(t.termination == Termination::SlopeBelowTol);
}

TEST_CASE("flow from 5 phi1 starts above the ray maximum and descends without bound") {
    const EnergyProblem prob = benchmark();
    const DiscreteSpace& s = prob.grid();
    FlowConfig flow;
    flow.max_steps = 2000;
    const Trajectory t = integrate_flow(prob, 5.0 * s.eigenpair(0).vector, flow);
    CHECK(t.states.front().energy < 0.0);
    CHECK(t.back().energy < 100.0 * t.states.front().energy);
    CHECK(t.back().norm > 10.0 * t.states.front().norm);
}

TEST_CASE("amplitude shooting along phi1 passes through the positive solution") {
    const EnergyProblem prob = benchmark();
    const DiscreteSpace& s = prob.grid();
    const Field phi = s.eigenpair(0).vector;
    FlowConfig flow;
    flow.max_steps = 4000;
    flow.dt_max = 0.05;
    // Below the stable manifold of the saddle the flow collapses to 0, above it blows up.
    const auto nehari = [&](const Field& u) { return s.h1_inner(u, u) - s.mass().dot(u.array().pow(4).matrix()); };
    const auto shoot = [&](const Field& base, double lo, double hi) {
        FlowState closest;
        closest.slope = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 60 && lo < hi; ++k) {
            const double c = 0.5 * (lo + hi);
            const Trajectory t = integrate_flow(prob, c * base, flow);
            for (const FlowState& st : t.states) {
                if (st.norm > 1.0 && st.slope < closest.slope) {
                    closest = st;
                }
            }
            (nehari(t.back().u) > 0.0 ? lo : hi) = c;
        }
        return closest;
    };
    // A second pass from the first near miss removes most of the stable components.
    const FlowState closest = shoot(shoot(phi, 1.0, 5.0).u, 0.9, 1.1);
    const Field& u = closest.u;
    CHECK(closest.label == RegionLabel::PositiveRegion);
    const Field residual = s.apply_stiffness(u) - s.apply_mass(u.array().pow(3).matrix());
    CHECK(s.dual_norm(residual) <= 1e-6);
    const Field newton = oracle::damped_newton(s, 1.0, 4.0, 3.0 * phi);
    CHECK((u - newton).cwiseAbs().maxCoeff() <= 1e-6 * newton.cwiseAbs().maxCoeff());
}

TEST_CASE("lifted flow from a multiple of phi2 reaches the nodal solution") {
    const EnergyProblem prob = benchmark();
    const DiscreteSpace& s = prob.grid();
    FlowConfig flow;
    flow.sector_lift = true;
    const Trajectory t = integrate_flow(prob, 20.0 * unit(s, 1), flow);
    REQUIRE(t.termination == Termination::SlopeBelowTol);
    CHECK(t.back().label == RegionLabel::SignChangingRegion);
    CHECK(count_sign_changes(s, t.back().u) == 1);
    const oracle::Shooting shot = oracle::shoot_nodal(1.0);
    CHECK(t.back().energy == doctest::Approx(shot.energy).epsilon(0.01));
    const Field& u = t.back().u;
    CHECK(u.cwiseAbs().maxCoeff() == doctest::Approx(shot.max_abs).epsilon(0.01));
}

TEST_CASE("invariance monitor") {
    const EnergyProblem prob = benchmark(31);
    const DiscreteSpace& s = prob.grid();

    SUBCASE("cone starts stay in D+") {
        Rng rng(21);
        for (int k = 0; k < 10; ++k) {
            Field u0 = rng.uniform(1.0, 8.0) * unit(s, 0);
            u0 += (rng.uniform(0.0, 0.5) * s.eigenpair(2).vector).cwiseMax(0.0);
            FlowConfig flow;
            flow.max_steps = 300;
            const InvarianceVerdict v = monitor_invariance(integrate_flow(prob, u0, flow), 0.5);
            CHECK(v.passed);
            CHECK(v.stayed_plus);
        }
    }
    SUBCASE("constant critical trajectory") {
        Trajectory t;
        t.states.push_back(make_state(prob, s.zeros(), 0.0, 0.0, FlowConfig{}));
        t.states.push_back(make_state(prob, s.zeros(), 1.0, 1.0, FlowConfig{}));
        CHECK(monitor_invariance(t, 0.5).passed);
    }
    SUBCASE("energy increase is reported at its index") {
        FlowConfig flow;
        flow.max_steps = 8;
        Trajectory t = integrate_flow(prob, 4.0 * unit(s, 0), flow);
        REQUIRE(t.states.size() >= 6);
        t.states[4].energy = t.states[3].energy + 1.0;
        const InvarianceVerdict v = monitor_invariance(t, 0.5);
        CHECK_FALSE(v.passed);
        CHECK_FALSE(v.monotone);
        REQUIRE_FALSE(v.violations.empty());
        CHECK(v.violations.front().state == 4);
        CHECK(v.violations.front().kind == "energy increased");
    }
}

TEST_CASE("checkpoint round trip") {
    const EnergyProblem prob = benchmark(31);
    FlowConfig flow;
    flow.max_steps = 5;
    const Trajectory t = integrate_flow(prob, 4.0 * unit(prob.grid(), 0), flow);
    const auto [back, next_dt] = load_checkpoint(checkpoint_json(t, 0.25, "abc"));
    CHECK(next_dt == 0.25);
    REQUIRE(back.states.size() == t.states.size());
    CHECK(back.termination == t.termination);
    for (std::size_t k = 0; k < t.states.size(); ++k) {
        CHECK((back.states[k].u - t.states[k].u).cwiseAbs().maxCoeff() == 0.0);
        CHECK(back.states[k].energy == t.states[k].energy);
    }
}
