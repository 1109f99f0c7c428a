#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nodal/linking_minimax.hpp"

#include <cmath>
#include <limits>

using namespace nodal;

namespace {

EnergyProblem benchmark(double lambda = 1.0) {
    return EnergyProblem(build_space(GridSpec::interval(0.0, 1.0, 63)), PiecewisePotential::builtin("power:4"),
                         lambda);
}

double sup_in_s(const SurfaceMesh& mesh) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& p : mesh.points) {
        if (p.label == RegionLabel::SignChangingRegion) {
            best = std::max(best, p.energy);
        }
    }
    return best;
}

}  // namespace

TEST_CASE("linking frame on the quartic benchmark") {
    const EnergyProblem prob = benchmark();
    const LinkingFrame f = build_frame(prob, 0.5);
    CHECK(f.min_j_sphere > 0.0);
    CHECK(f.max_j_arc < 0.0);
    CHECK(f.radius_t < f.radius_q);
    for (const Field& v : f.sphere) {
        CHECK(region_of(prob.grid(), f.radius_t * v, 0.1) == RegionLabel::SignChangingRegion);
    }
    const AlphaBeta ab = estimate_alpha_beta(prob, f);
    CHECK(ab.alpha < 0.0);
    CHECK(ab.beta > 0.0);
    CHECK(ab.beta <= f.min_j_sphere + 1e-12);
}

TEST_CASE("tiny lambda has no linking window") {
    const EnergyProblem prob = benchmark(1e-3);
    CHECK_THROWS_AS(build_frame(prob, 0.5), NoLinkingWindow);
}

TEST_CASE("a half-disk that is too small violates the gap") {
    const EnergyProblem prob = benchmark();
    LinkingFrame f = build_frame(prob, 0.5);
    f.radius_q = 1.2 * f.radius_t;
    CHECK_THROWS_AS(estimate_alpha_beta(prob, f), GapViolation);
}

TEST_CASE("surface deformation") {
    const EnergyProblem prob = benchmark();
    const LinkingFrame f = build_frame(prob, 0.5);
    const SurfaceMesh mesh = build_mesh(prob, f, 8, 4, 17);
    FlowConfig flow;
    flow.mu0 = f.mu0;
    flow.max_steps = 10;
    flow.level = sup_in_s(mesh);
    flow.eps = 0.01 * std::abs(*flow.level);
    flow.eps_bar = 2.0 * flow.eps;

    const SurfaceMesh moved = deform_surface(prob, mesh, flow);
    REQUIRE(moved.points.size() == mesh.points.size());
    int frozen = 0;
    for (std::size_t k = 0; k < mesh.points.size(); ++k) {
        if (mesh.points[k].frozen) {
            ++frozen;
            CHECK((moved.points[k].image - mesh.points[k].image).cwiseAbs().maxCoeff() == 0.0);
            CHECK(moved.points[k].energy == mesh.points[k].energy);
        }
    }
    CHECK(frozen > 0);
    CHECK(sup_in_s(moved) < sup_in_s(mesh));

    SurfaceMesh single;
    single.radius = mesh.radius;
    for (const auto& p : mesh.points) {
        if (p.frozen) {
            single.points.push_back(p);
            break;
        }
    }
    const SurfaceMesh same = deform_surface(prob, single, flow);
    REQUIRE(same.points.size() == 1);
    CHECK((same.points[0].image - single.points[0].image).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sign changes along the line") {
    const auto s = build_space(GridSpec::interval(0.0, 1.0, 31));
    CHECK(count_sign_changes(*s, s->eigenpair(0).vector) == 0);
    CHECK(count_sign_changes(*s, s->eigenpair(1).vector) == 1);
    CHECK(count_sign_changes(*s, s->eigenpair(2).vector) == 2);
    Field gaps = s->zeros();
    gaps[3] = 1.0;
    gaps[10] = -1.0;
    CHECK(count_sign_changes(*s, gaps) == 1);
}
