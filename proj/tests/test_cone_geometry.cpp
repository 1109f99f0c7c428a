#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"

#include "nodal/cone_geometry.hpp"
#include "nodal/random.hpp"

#include <cmath>

using namespace nodal;

TEST_CASE("projection onto the positive cone") {
    const auto s = build_space(GridSpec::interval(0.0, 1.0, 31));
    const Field phi1 = s->eigenpair(0).vector;

    const Field positive = phi1.cwiseAbs() + s->eigenpair(2).vector.cwiseAbs();
    const ProjectionResult same = project_cone(*s, positive);
    CHECK((same.projection - positive).cwiseAbs().maxCoeff() == 0.0);
    CHECK(same.distance == 0.0);

    const ProjectionResult neg = project_cone(*s, -phi1);
    CHECK(neg.projection.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(neg.distance == doctest::Approx(std::sqrt(s->eigenpair(0).value)).epsilon(1e-10));
}

TEST_CASE("projection matches active-set enumeration for n = 4") {
    const auto s = build_space(GridSpec::interval(0.0, 1.0, 4));
    const Eigen::MatrixXd A = oracle::dense_stiffness(*s);
    Rng rng(5);
    for (int k = 0; k < 200; ++k) {
        const Field u = rng.normal_vector(4) * std::exp(rng.uniform(-2.0, 2.0));
        const oracle::Projection o = oracle::enumerate_projection(A, u);
        const ProjectionResult r = project_cone(*s, u);
        CHECK((r.projection - o.point).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + u.cwiseAbs().maxCoeff()));
        CHECK(r.distance == doctest::Approx(o.distance).epsilon(1e-10));
        const ProjectionResult minus = project_cone(*s, u, Sign::Minus);
        CHECK(minus.distance == doctest::Approx(oracle::cone_distance(A, u, -1)).epsilon(1e-10));
    }
}

TEST_CASE("distances to both cones") {
    const auto s = build_space(GridSpec::interval(0.0, 1.0, 31));
    const auto [z_plus, z_minus] = dist_to_cones(*s, s->zeros());
    CHECK(z_plus == 0.0);
    CHECK(z_minus == 0.0);
    const Field phi1 = s->eigenpair(0).vector;
    const auto [p_plus, p_minus] = dist_to_cones(*s, phi1);
    CHECK(p_plus == 0.0);
    CHECK(p_minus == doctest::Approx(std::sqrt(s->eigenpair(0).value)).epsilon(1e-10));
    const auto [q_plus, q_minus] = dist_to_cones(*s, s->eigenpair(1).vector);
    CHECK(q_plus > 0.0);
    CHECK(q_minus > 0.0);
}

TEST_CASE("region labels") {
    const auto s = build_space(GridSpec::interval(0.0, 1.0, 31));
    CHECK(region_of(*s, s->zeros(), 0.5) == RegionLabel::Overlap);
    CHECK(region_of(*s, 3.0 * s->eigenpair(0).vector, 0.1) == RegionLabel::PositiveRegion);
    CHECK(region_of(*s, -3.0 * s->eigenpair(0).vector, 0.1) == RegionLabel::NegativeRegion);
    const Field phi2 = s->eigenpair(1).vector;
    const auto [dp, dm] = dist_to_cones(*s, phi2);
    const double c = 2.0 * 0.5 / std::min(dp, dm);
    CHECK(region_of(*s, c * phi2, 0.5) == RegionLabel::SignChangingRegion);
    CHECK(parse_region(to_string(RegionLabel::SignChangingRegion)) == RegionLabel::SignChangingRegion);
}

TEST_CASE("Schauder check") {
    const auto s = build_space(GridSpec::interval(0.0, 1.0, 31));
    const Field phi1 = s->eigenpair(0).vector;

    SUBCASE("image shrinks with lambda") {
        const EnergyProblem big(s, PiecewisePotential::builtin("power:4"), 1.0);
        const EnergyProblem small(s, PiecewisePotential::builtin("power:4"), 1e-3);
        const InvarianceReport rb = check_schauder(big, 0.5, 100, 3);
        const InvarianceReport rs = check_schauder(small, 0.5, 100, 3);
        CHECK(rs.worst_ratio <= 1e-3 * rb.worst_ratio * 1.0001);
    }
    SUBCASE("cone points map into the cone") {
        const EnergyProblem prob(s, PiecewisePotential::builtin("power:4"), 1.0);
        const InvarianceReport r = check_schauder(prob, 0.5, 20, 3, {3.0 * phi1, -2.0 * phi1});
        int interior = 0;
        for (const auto& sample : r.samples) {
            if (sample.distance == 0.0) {
                ++interior;
                CHECK(sample.image_distance <= 1e-12);
            }
        }
        CHECK(interior >= 2);
    }
    SUBCASE("benchmark with the selected mu0 passes") {
        const EnergyProblem prob(s, PiecewisePotential::builtin("power:4"), 1.0);
        const Mu0Selection sel = select_mu0(prob, 10, 4);
        CHECK(sel.mu0 > 0.0);
        CHECK(sel.mu0 < 1.0);
        CHECK(sel.mu0 / 3.0 + sel.fitted_c * std::pow(sel.mu0, 3) <= sel.mu0 / 2.0 + 1e-12);
        const InvarianceReport r = check_schauder(prob, sel.mu0, 200, 9, {}, {}, sel.fitted_c);
        CHECK(r.passed);
        CHECK(r.inequality_holds);
        CHECK(r.worst_ratio <= 0.5 + 1e-6);
    }
}
