#include "nodal/linking_minimax.hpp"

#include "nodal/parallel.hpp"
#include "nodal/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace nodal {

namespace {

std::vector<double> radius_ladder(const ScanConfig& scan) {
    if (!(scan.radius_min > 0.0 && scan.radius_min < scan.radius_max && scan.ratio > 1.0)) {
        throw std::invalid_argument("scan needs 0 < radius_min < radius_max and ratio > 1");
    }
    std::vector<double> radii;
    for (double r = scan.radius_min; r <= scan.radius_max * (1.0 + 1e-12); r *= scan.ratio) {
        radii.push_back(r);
    }
    return radii;
}

// Unit vector (H¹₀ norm) of the arc parametrized by θ ∈ [0, π].
Field arc_direction(const LinkingFrame& f, double theta) { return f.embed(std::cos(theta), std::sin(theta)); }

std::vector<Field> sample_sphere(const DiscreteSpace& space, const ScanConfig& scan) {
    Rng rng(scan.seed);
    const Field& phi1 = space.eigenpair(0).vector;
    std::vector<Field> dirs;
    const int modes = std::min<int>(scan.modes, static_cast<int>(space.size()));
    for (int k = 0; k < scan.sphere_samples; ++k) {
        Field v = space.zeros();
        if (k == 0) {
            v = space.eigenpair(1).vector;
        } else {
            for (int m = 1; m < modes; ++m) {
                v += rng.normal() / m * space.eigenpair(m).vector;
            }
            v += 0.05 * rng.normal_vector(space.size()) * phi1.cwiseAbs().maxCoeff();
        }
        v -= space.l2_inner(v, phi1) * phi1;
        const double n = space.h1_norm(v);
        if (n > 0.0) {
            dirs.push_back(v / n);
        }
    }
    return dirs;
}

}  // namespace

LinkingFrame build_frame(const EnergyProblem& prob, double mu0, const ScanConfig& scan) {
    const DiscreteSpace& s = prob.grid();
    LinkingFrame f;
    f.mu0 = mu0;
    f.phi1 = s.eigenpair(0).vector / s.h1_norm(s.eigenpair(0).vector);
    f.phi2 = s.eigenpair(1).vector / s.h1_norm(s.eigenpair(1).vector);
    f.sphere = sample_sphere(s, scan);

    double cone_floor = std::numeric_limits<double>::infinity();
    for (const Field& v : f.sphere) {
        const auto [dp, dm] = dist_to_cones(s, v);
        cone_floor = std::min({cone_floor, dp, dm});
    }

    const std::vector<double> radii = radius_ladder(scan);
    nlohmann::json sphere_profile = nlohmann::json::array();
    nlohmann::json arc_profile = nlohmann::json::array();

    const auto sphere_min = [&](double rho) {
        double m = std::numeric_limits<double>::infinity();
        for (const Field& v : f.sphere) {
            m = std::min(m, energy(prob, rho * v));
        }
        return m;
    };
    const auto arc_max = [&](double rho) {
        double m = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < scan.circle_samples; ++k) {
            const double theta = std::numbers::pi * k / std::max(1, scan.circle_samples - 1);
            m = std::max(m, energy(prob, rho * arc_direction(f, theta)));
        }
        return m;
    };

    // δ_T: the smallest ladder radius putting every T sample in S with J > 0.
    std::optional<double> radius_t = scan.radius_t;
    if (!radius_t) {
        for (double rho : radii) {
            const double m = sphere_min(rho);
            sphere_profile.push_back({{"radius", rho}, {"min_J", m}, {"min_cone_distance", rho * cone_floor}});
            if (m > 0.0 && rho * cone_floor > mu0) {
                radius_t = rho;
                break;
            }
        }
    }
    if (!radius_t) {
        throw NoLinkingWindow("no sphere radius with min J > 0 outside the cone neighbourhoods",
                              {{"sphere", sphere_profile}, {"arc", arc_profile}});
    }
    f.radius_t = *radius_t;
    f.min_j_sphere = sphere_min(f.radius_t);

    std::optional<double> radius_q = scan.radius_q;
    if (!radius_q) {
        for (double rho : radii) {
            if (rho <= f.radius_t) {
                continue;
            }
            const double m = arc_max(rho);
            arc_profile.push_back({{"radius", rho}, {"max_J", m}});
            if (m < 0.0) {
                radius_q = rho;
                break;
            }
        }
    }
    if (!radius_q) {
        throw NoLinkingWindow("no arc radius with max J < 0 within the scan range",
                              {{"sphere", sphere_profile}, {"arc", arc_profile}});
    }
    f.radius_q = *radius_q;
    f.max_j_arc = arc_max(f.radius_q);
    f.scan = {{"sphere", sphere_profile}, {"arc", arc_profile}, {"sphere_cone_floor", cone_floor}};
    if (!(f.radius_t < f.radius_q)) {
        throw NoLinkingWindow("sphere radius is not below the half-disk radius", f.scan);
    }
    return f;
}

AlphaBeta estimate_alpha_beta(const EnergyProblem& prob, const LinkingFrame& frame, int arc_points) {
    const DiscreteSpace& s = prob.grid();
    AlphaBeta ab;
    ab.alpha = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < arc_points; ++k) {
        const double theta = std::numbers::pi * k / std::max(1, arc_points - 1);
        const Field u = frame.radius_q * arc_direction(frame, theta);
        if (region_of(s, u, frame.mu0) != RegionLabel::SignChangingRegion) {
            continue;
        }
        const double j = energy(prob, u);
        if (j > ab.alpha) {
            ab.alpha = j;
            ab.alpha_theta = theta;
        }
    }
    ab.beta = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < frame.sphere.size(); ++k) {
        const double j = energy(prob, frame.radius_t * frame.sphere[k]);
        if (j < ab.beta) {
            ab.beta = j;
            ab.beta_witness = k;
        }
    }
    if (!(ab.alpha < ab.beta)) {
        throw GapViolation("alpha >= beta: the frame does not separate levels", ab.alpha, ab.beta);
    }
    return ab;
}

SurfaceMesh build_mesh(const EnergyProblem& prob, const LinkingFrame& frame, int ns, int nt, int arc_points) {
    if (ns < 1 || nt < 1 || arc_points < 2) {
        throw std::invalid_argument("mesh needs ns, nt >= 1 and at least two arc points");
    }
    const DiscreteSpace& sp = prob.grid();
    SurfaceMesh mesh;
    mesh.radius = frame.radius_q;
    const double r = frame.radius_q;
    const auto add = [&](double s, double t, bool on_arc) {
        MeshPoint p;
        p.s = s;
        p.t = t;
        p.image = frame.embed(s, t);
        p.energy = energy(prob, p.image);
        p.label = region_of(sp, p.image, frame.mu0);
        const bool in_s = p.label == RegionLabel::SignChangingRegion;
        const bool on_boundary = on_arc || t == 0.0;
        p.frozen = on_boundary && in_s;
        p.w_boundary = on_boundary && !in_s;
        mesh.points.push_back(std::move(p));
    };
    for (int l = 0; l <= nt; ++l) {
        const double t = r * l / nt;
        for (int k = 0; k <= ns; ++k) {
            const double s = -r + 2.0 * r * k / ns;
            if (s * s + t * t < r * r * (1.0 - 1e-12)) {
                add(s, t, false);
            }
        }
    }
    for (int k = 0; k < arc_points; ++k) {
        const double theta = std::numbers::pi * k / (arc_points - 1);
        add(r * std::cos(theta), k == 0 || k == arc_points - 1 ? 0.0 : r * std::sin(theta), true);
    }
    // Lexicographic (s, t) order fixes tie-breaking among equal maximizers.
    std::stable_sort(mesh.points.begin(), mesh.points.end(), [](const MeshPoint& a, const MeshPoint& b) {
        return a.s < b.s || (a.s == b.s && a.t < b.t);
    });
    return mesh;
}

SurfaceMesh deform_surface(const EnergyProblem& prob, const SurfaceMesh& mesh, const FlowConfig& flow,
                           unsigned workers) {
    SurfaceMesh out = mesh;
    parallel_for(
        out.points.size(),
        [&](std::size_t i) {
            MeshPoint& p = out.points[i];
            if (p.frozen) {
                return;
            }
            const Trajectory traj = integrate_flow(prob, p.image, flow);
            const FlowState& end = traj.back();
            p.image = end.u;
            p.energy = std::min(p.energy, end.energy);
            p.label = classify(end.d_plus, end.d_minus, flow.mu0);
        },
        workers);
    for (const MeshPoint& p : out.points) {
        if (p.w_boundary && p.label == RegionLabel::SignChangingRegion) {
            throw InvarianceViolationError("a boundary mesh point left the cone neighbourhoods");
        }
    }
    return out;
}

MinimaxConfig::MinimaxConfig() {
    refine_flow.sector_lift = true;
    refine_flow.tol_m = 1e-9;
    refine_flow.max_steps = 20000;
}

int count_sign_changes(const DiscreteSpace& space, const Field& u, double zero_tol) {
    const GridSpec& g = space.grid();
    const int nx = g.nodes[0];
    const int row = g.dimension == 2 ? g.nodes[1] / 2 : 0;
    int changes = 0;
    int last = 0;
    for (int i = 0; i < nx; ++i) {
        const double v = u[row * nx + i];
        const int sign = v > zero_tol ? 1 : (v < -zero_tol ? -1 : 0);
        if (sign != 0) {
            if (last != 0 && sign != last) {
                ++changes;
            }
            last = sign;
        }
    }
    return changes;
}

MinimaxReport minimax_iterate(const EnergyProblem& prob, const LinkingFrame& frame, const MinimaxConfig& config) {
    const DiscreteSpace& sp = prob.grid();
    MinimaxReport report;
    const AlphaBeta ab = estimate_alpha_beta(prob, frame, std::max(config.arc_points, 2));
    report.alpha = ab.alpha;
    report.beta = ab.beta;

    SurfaceMesh mesh = build_mesh(prob, frame, config.ns, config.nt, config.arc_points);
    std::vector<Field> excised;
    double excision_delta = config.base_flow.delta;
    const auto sup_in_s = [](const SurfaceMesh& m) -> std::optional<std::size_t> {
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < m.points.size(); ++i) {
            const MeshPoint& p = m.points[i];
            if (p.label == RegionLabel::SignChangingRegion && (!best || p.energy > m.points[*best].energy)) {
                best = i;
            }
        }
        return best;
    };

    for (report.iterations = 0; report.iterations < config.max_iterations; ++report.iterations) {
        const auto top = sup_in_s(mesh);
        if (!top) {
            throw NoLinkingWindow("no mesh point of the surface lies in S", frame.scan);
        }
        const double r = mesh.points[*top].energy;
        report.r_estimates.push_back(r);
        const std::size_t k = report.r_estimates.size();
        if (k >= 4 && std::abs(report.r_estimates[k - 4] - r) <= config.stabilization_tol * (1.0 + std::abs(r))) {
            report.stabilized = true;
            break;
        }

        FlowConfig flow = config.base_flow;
        flow.mu0 = frame.mu0;
        flow.level = r;
        flow.eps = config.eps_rel * std::max(1.0, std::abs(r));
        flow.eps_bar = 2.0 * flow.eps;
        flow.max_steps = config.steps_per_sweep;
        // Horizon 16ε/b̂ with b̂ the smallest weighted slope in the band.
        double b_hat = std::numeric_limits<double>::infinity();
        for (const MeshPoint& p : mesh.points) {
            if (!p.frozen && p.energy >= r - flow.eps_bar) {
                b_hat = std::min(b_hat, (1.0 + sp.h1_norm(p.image)) * slope(prob, p.image).value);
            }
        }
        double horizon = b_hat > 0.0 ? 16.0 * flow.eps / b_hat : config.horizon_cap;
        horizon = std::min(horizon, config.horizon_cap);
        flow.t_max = horizon;
        flow.dt0 = std::min(flow.dt0, horizon);
        flow.dt_min = std::min(flow.dt_min, flow.dt0);
        report.horizons.push_back(horizon);

        // Near-critical points found from the current maximizer are excised through ψ.
        if (config.excise_detected) {
            FlowConfig probe = config.refine_flow;
            probe.mu0 = frame.mu0;
            probe.max_steps = config.detect_steps;
            probe.level.reset();
            probe.excised.clear();
            const FlowState end = integrate_flow(prob, mesh.points[*top].image, probe).back();
            if (end.slope <= config.tol_m && end.label == RegionLabel::SignChangingRegion) {
                const double delta = config.delta_rel * sp.h1_norm(end.u);
                const bool known = std::any_of(excised.begin(), excised.end(), [&](const Field& e) {
                    return sp.h1_norm(e - end.u) < delta;
                });
                if (!known) {
                    excised.push_back(end.u);
                    report.detected_energies.push_back(end.energy);
                }
                excision_delta = std::max(excision_delta, delta);
            }
        }
        flow.excised = excised;
        flow.delta = excision_delta;
        mesh = deform_surface(prob, mesh, flow, config.workers);
    }
    if (report.r_estimates.empty()) {
        throw std::invalid_argument("minimax needs at least one iteration");
    }
    report.r_final = report.r_estimates.back();
    if (const auto top = sup_in_s(mesh)) {
        // Sampling error of the sup: energy drop to the grid neighbours of the maximizer.
        const MeshPoint& best = mesh.points[*top];
        const double ds = 2.0 * mesh.radius / config.ns * (1.0 + 1e-9);
        const double dt = mesh.radius / config.nt * (1.0 + 1e-9);
        for (const MeshPoint& q : mesh.points) {
            if (q.label == RegionLabel::SignChangingRegion && std::abs(q.s - best.s) <= ds &&
                std::abs(q.t - best.t) <= dt) {
                report.mesh_tolerance = std::max(report.mesh_tolerance, best.energy - q.energy);
            }
        }
    }

    // Maximizers in decreasing order of J, ties by (s, t).
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < mesh.points.size(); ++i) {
        if (mesh.points[i].label == RegionLabel::SignChangingRegion) {
            order.push_back(i);
        }
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return mesh.points[a].energy > mesh.points[b].energy;
    });

    FlowConfig refine = config.refine_flow;
    refine.mu0 = frame.mu0;
    refine.level.reset();
    refine.excised.clear();
    const int budget = std::min<int>(static_cast<int>(order.size()), std::max(1, config.max_restarts));
    for (int a = 0; a < budget; ++a) {
        const MeshPoint& p = mesh.points[order[static_cast<std::size_t>(a)]];
        Trajectory traj = integrate_flow(prob, p.image, refine);
        const FlowState& end = traj.back();
        MinimaxAttempt attempt{p.s, p.t, p.energy, end.energy, end.slope, end.label, traj.termination};
        report.attempts.push_back(attempt);
        report.maximizer_s = p.s;
        report.maximizer_t = p.t;
        report.maximizer = p.image;
        report.critical = end.u;
        report.critical_energy = energy(prob, end.u);
        report.critical_slope = end.slope;
        report.d_plus = end.d_plus;
        report.d_minus = end.d_minus;
        report.label = end.label;
        report.sign_changes = count_sign_changes(sp, end.u);
        report.refinement = std::move(traj);
        report.converged = end.slope <= config.tol_m && end.label == RegionLabel::SignChangingRegion;
        if (end.label == RegionLabel::SignChangingRegion) {
            break;
        }
    }
    return report;
}

void to_json(nlohmann::json& j, const LinkingFrame& f) {
    j = {{"radius_Q", f.radius_q},
         {"radius_T", f.radius_t},
         {"mu0", f.mu0},
         {"sphere_samples", f.sphere.size()},
         {"min_J_on_T", f.min_j_sphere},
         {"max_J_on_arc", f.max_j_arc},
         {"Q_interpretation", "span construction: Q = {s*phi1 + t*phi2 : |(s,t)| <= R, t >= 0}"},
         {"scan", f.scan}};
}

void to_json(nlohmann::json& j, const MinimaxReport& r) {
    nlohmann::json attempts = nlohmann::json::array();
    for (const auto& a : r.attempts) {
        attempts.push_back({{"s", a.s},
                            {"t", a.t},
                            {"start_J", a.start_energy},
                            {"J", a.energy},
                            {"slope", a.slope},
                            {"label", to_string(a.label)},
                            {"termination", to_string(a.termination)}});
    }
    j = {{"alpha", r.alpha},
         {"beta", r.beta},
         {"r_estimates", r.r_estimates},
         {"r_final", r.r_final},
         {"mesh_tolerance", r.mesh_tolerance},
         {"maximizer", {{"s", r.maximizer_s}, {"t", r.maximizer_t}}},
         {"critical_energy", r.critical_energy},
         {"critical_slope", r.critical_slope},
         {"d_plus", r.d_plus},
         {"d_minus", r.d_minus},
         {"sign_changes", r.sign_changes},
         {"label", to_string(r.label)},
         {"iterations", r.iterations},
         {"stabilized", r.stabilized},
         {"converged", r.converged},
         {"horizons", r.horizons},
         {"detected_critical_energies", r.detected_energies},
         {"attempts", std::move(attempts)},
         {"refinement_steps", r.refinement.states.empty() ? 0 : r.refinement.states.size() - 1},
         {"refinement_termination", to_string(r.refinement.termination)}};
}

}  // namespace nodal
