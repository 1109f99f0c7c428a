#pragma once

#include "nodal/cone_geometry.hpp"
#include "nodal/descending_flow.hpp"
#include "nodal/nonsmooth_calculus.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nodal {

struct NoLinkingWindow : std::runtime_error {
    NoLinkingWindow(const std::string& what, nlohmann::json profile)
        : std::runtime_error(what), scan(std::move(profile)) {}
    nlohmann::json scan;
};

struct GapViolation : std::runtime_error {
    GapViolation(const std::string& what, double a, double b) : std::runtime_error(what), alpha(a), beta(b) {}
    double alpha;
    double beta;
};

struct InvarianceViolationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ScanConfig {
    double radius_min = 0.05;
    double radius_max = 400.0;
    double ratio = 1.1;
    int sphere_samples = 64;
    int circle_samples = 181;
    /// Modes mixed into random directions of the φ₁-complement.
    int modes = 12;
    std::uint64_t seed = 1;
    /// Fixed values replace the scans.
    std::optional<double> radius_q;
    std::optional<double> radius_t;
};

/// Q = {s·φ̂₁ + t·φ̂₂ : s² + t² ≤ R², t ≥ 0} with φ̂ = φ/‖φ‖, and the sphere
/// T of radius δ_T in the M-orthogonal complement V of φ₁.
struct LinkingFrame {
    Field phi1;
    Field phi2;
    double radius_q = 0.0;
    double radius_t = 0.0;
    double mu0 = 0.5;
    /// Unit directions in V sampled for T.
    std::vector<Field> sphere;
    double min_j_sphere = 0.0;
    double max_j_arc = 0.0;
    nlohmann::json scan;

    Field embed(double s, double t) const { return s * phi1 + t * phi2; }
};

LinkingFrame build_frame(const EnergyProblem& prob, double mu0, const ScanConfig& scan = {});

struct AlphaBeta {
    double alpha = 0.0;
    double beta = 0.0;
    double alpha_theta = 0.0;
    std::size_t beta_witness = 0;
};

/// α over the arc points of ∂Q lying in S, β over the T samples.
AlphaBeta estimate_alpha_beta(const EnergyProblem& prob, const LinkingFrame& frame, int arc_points = 181);

struct MeshPoint {
    double s = 0.0;
    double t = 0.0;
    Field image;
    double energy = 0.0;
    RegionLabel label = RegionLabel::Overlap;
    /// On ∂Q ∩ S: held fixed.
    bool frozen = false;
    /// On ∂Q ∩ W: must stay in W.
    bool w_boundary = false;
};

struct SurfaceMesh {
    std::vector<MeshPoint> points;
    double radius = 0.0;
};

SurfaceMesh build_mesh(const EnergyProblem& prob, const LinkingFrame& frame, int ns, int nt, int arc_points);

/// Runs the flow for the configured horizon from every non-frozen image.
SurfaceMesh deform_surface(const EnergyProblem& prob, const SurfaceMesh& mesh, const FlowConfig& flow,
                           unsigned workers = 0);

struct MinimaxConfig {
    int ns = 16;
    int nt = 8;
    int arc_points = 33;
    int max_iterations = 40;
    double stabilization_tol = 1e-4;
    /// ε = eps_rel·max(1, |r|), ε̄ = 2ε.
    double eps_rel = 0.01;
    int steps_per_sweep = 40;
    double horizon_cap = 1.0;
    FlowConfig base_flow;
    /// Lifted flow that polishes the final maximizer.
    FlowConfig refine_flow;
    /// Excise critical points reached by a short lifted flow from each maximizer.
    bool excise_detected = true;
    int detect_steps = 400;
    /// δ = delta_rel·‖u_c‖ for detected points.
    double delta_rel = 0.2;
    int max_restarts = 5;
    /// Slope bound on the refined critical point.
    double tol_m = 1e-6;
    unsigned workers = 0;

    MinimaxConfig();
};

struct MinimaxAttempt {
    double s = 0.0;
    double t = 0.0;
    double start_energy = 0.0;
    double energy = 0.0;
    double slope = 0.0;
    RegionLabel label = RegionLabel::Overlap;
    Termination termination = Termination::MaxSteps;
};

struct MinimaxReport {
    double alpha = 0.0;
    double beta = 0.0;
    std::vector<double> r_estimates;
    double r_final = 0.0;
    /// Largest drop of J from the final maximizer to its in-S grid neighbours.
    double mesh_tolerance = 0.0;
    double maximizer_s = 0.0;
    double maximizer_t = 0.0;
    Field maximizer;
    Field critical;
    double critical_energy = 0.0;
    double critical_slope = 0.0;
    double d_plus = 0.0;
    double d_minus = 0.0;
    int sign_changes = 0;
    RegionLabel label = RegionLabel::Overlap;
    int iterations = 0;
    bool stabilized = false;
    bool converged = false;
    std::vector<MinimaxAttempt> attempts;
    Trajectory refinement;
    std::vector<double> horizons;
    std::vector<double> detected_energies;
};

MinimaxReport minimax_iterate(const EnergyProblem& prob, const LinkingFrame& frame, const MinimaxConfig& config);

/// Strict sign alternations between consecutive nonzero nodal values along x.
int count_sign_changes(const DiscreteSpace& space, const Field& u, double zero_tol = 0.0);

void to_json(nlohmann::json& j, const LinkingFrame& f);
void to_json(nlohmann::json& j, const MinimaxReport& r);

}  // namespace nodal
