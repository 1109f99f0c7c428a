#include "nodal/descending_flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace nodal {

void FlowConfig::validate() const {
    if (!(eps > 0.0 && eps < eps_bar)) {
        throw std::invalid_argument("flow config needs 0 < eps < eps_bar");
    }
    if (!(dt_min > 0.0 && dt_min <= dt0 && dt0 <= dt_max)) {
        throw std::invalid_argument("flow config needs 0 < dt_min <= dt0 <= dt_max");
    }
    if (!(tol_m > 0.0)) {
        throw std::invalid_argument("flow config needs tol_m > 0");
    }
    if (!(delta > 0.0) && !excised.empty()) {
        throw std::invalid_argument("flow config needs delta > 0 when points are excised");
    }
    if (!(mu0 > 0.0 && mu0 < 1.0)) {
        throw std::invalid_argument("flow config needs mu0 in (0, 1)");
    }
    if (max_steps < 0 || !(t_max > 0.0)) {
        throw std::invalid_argument("flow config needs max_steps >= 0 and t_max > 0");
    }
}

std::string to_string(Termination t) {
    switch (t) {
        case Termination::SlopeBelowTol:
            return "SlopeBelowTol";
        case Termination::MaxTime:
            return "MaxTime";
        case Termination::MaxSteps:
            return "MaxSteps";
        case Termination::FieldVanished:
            return "FieldVanished";
        case Termination::StepFailure:
            return "StepFailure";
        case Termination::Interrupted:
            return "Interrupted";
    }
    return "Unknown";
}

Termination parse_termination(const std::string& text) {
    for (Termination t : {Termination::SlopeBelowTol, Termination::MaxTime, Termination::MaxSteps,
                          Termination::FieldVanished, Termination::StepFailure, Termination::Interrupted}) {
        if (to_string(t) == text) {
            return t;
        }
    }
    throw std::invalid_argument("unknown termination: " + text);
}

std::vector<RegionLabel> Trajectory::labels() const {
    std::vector<RegionLabel> out;
    out.reserve(states.size());
    for (const auto& s : states) {
        out.push_back(s.label);
    }
    return out;
}

Field pseudo_gradient(const DiscreteSpace& space, const SlopeResult& slope, const Field& u) {
    if (slope.value == 0.0) {
        return space.zeros();
    }
    return (1.0 + space.h1_norm(u)) * std::min(1.0, 1.0 / slope.value) * slope.riesz;
}

Field pseudo_gradient(const EnergyProblem& prob, const Field& u) {
    return pseudo_gradient(prob.grid(), slope(prob, u), u);
}

double cutoff_rho(const FlowConfig& config, double energy_value) {
    if (!config.level) {
        return 1.0;
    }
    const double gap = std::abs(energy_value - *config.level);
    if (gap <= config.eps) {
        return 1.0;
    }
    if (gap >= config.eps_bar) {
        return 0.0;
    }
    return (config.eps_bar - gap) / (config.eps_bar - config.eps);
}

double cutoff_psi(const FlowConfig& config, const DiscreteSpace& space, const Field& u) {
    double psi = 1.0;
    for (const Field& z : config.excised) {
        const double d = space.h1_norm(u - z);
        psi = std::min(psi, std::clamp(d / config.delta - 1.0, 0.0, 1.0));
    }
    return psi;
}

Field sector_lift(const EnergyProblem& prob, const Field& u) {
    const DiscreteSpace& s = prob.grid();
    s.check_shape(u);
    const Field parts[2] = {u.cwiseMax(0.0), u.cwiseMin(0.0)};
    const Field stiff[2] = {s.apply_stiffness(parts[0]), s.apply_stiffness(parts[1])};
    const double gram[2][2] = {{parts[0].dot(stiff[0]), parts[0].dot(stiff[1])},
                               {parts[1].dot(stiff[0]), parts[1].dot(stiff[1])}};
    const Eigen::VectorXd weights = s.mass();
    std::vector<double> coeff(static_cast<std::size_t>(u.size()));
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        coeff[static_cast<std::size_t>(i)] = prob.potential.coefficient()(s.point(i));
    }

    // Right derivative in σ of J(σ·p_k + τ·p_other).
    const auto derivative = [&](int k, double sigma, double tau) {
        const Field& p = parts[k];
        double d = sigma * gram[k][k] + tau * gram[k][1 - k];
        const int side = k == 0 ? 1 : -1;
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            if (p[i] != 0.0) {
                d -= prob.lambda * weights[i] * coeff[static_cast<std::size_t>(i)] *
                     prob.potential.one_sided_derivative(sigma * p[i], side) * p[i];
            }
        }
        return d;
    };

    double scale[2] = {1.0, 1.0};
    bool present[2] = {gram[0][0] > 0.0, gram[1][1] > 0.0};
    if (!present[0] && !present[1]) {
        return u;
    }
    for (int sweep = 0; sweep < 200; ++sweep) {
        double change = 0.0;
        for (int k = 0; k < 2; ++k) {
            if (!present[k]) {
                continue;
            }
            const double tau = scale[1 - k];
            double lo = 0.0;
            double hi = scale[k];
            int doublings = 0;
            while (derivative(k, hi, tau) >= 0.0) {
                lo = hi;
                hi *= 2.0;
                if (++doublings > 200) {
                    return u;
                }
            }
            for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (!(mid > lo && mid < hi)) {
                    break;
                }
                (derivative(k, mid, tau) >= 0.0 ? lo : hi) = mid;
            }
            const double next = 0.5 * (lo + hi);
            change = std::max(change, std::abs(next - scale[k]) / std::max(next, 1e-300));
            scale[k] = next;
        }
        if (change <= 1e-15) {
            break;
        }
    }
    return scale[0] * parts[0] + scale[1] * parts[1];
}

namespace {

struct Evaluated {
    FlowState state;
    SlopeResult slope;
};

Evaluated evaluate(const EnergyProblem& prob, const Field& u, double t, double dt, const FlowConfig& config) {
    const DiscreteSpace& s = prob.grid();
    Evaluated e;
    e.slope = slope(prob, u);
    e.state.t = t;
    e.state.u = u;
    e.state.energy = energy(prob, u);
    e.state.slope = e.slope.value;
    e.state.norm = s.h1_norm(u);
    const auto [dp, dm] = dist_to_cones(s, u);
    e.state.d_plus = dp;
    e.state.d_minus = dm;
    e.state.label = classify(dp, dm, config.mu0);
    e.state.dt = dt;
    e.state.cutoff = cutoff_rho(config, e.state.energy) * cutoff_psi(config, s, u);
    return e;
}

std::vector<bool> excision_membership(const FlowConfig& config, const DiscreteSpace& space, const Field& u) {
    std::vector<bool> inside;
    inside.reserve(config.excised.size());
    for (const Field& z : config.excised) {
        inside.push_back(space.h1_norm(u - z) < 2.0 * config.delta);
    }
    return inside;
}

void write_checkpoint(const FlowConfig& config, const Trajectory& traj, double next_dt) {
    std::ofstream out(config.checkpoint_path);
    if (!out) {
        throw std::runtime_error("cannot write checkpoint " + config.checkpoint_path);
    }
    out << checkpoint_json(traj, next_dt, config.checkpoint_hash).dump() << '\n';
}

}  // namespace

FlowState make_state(const EnergyProblem& prob, const Field& u, double t, double dt, const FlowConfig& config) {
    return evaluate(prob, u, t, dt, config).state;
}

Trajectory integrate_flow(const EnergyProblem& prob, const Field& u0, const FlowConfig& config) {
    config.validate();
    prob.grid().check_shape(u0);
    Trajectory traj;
    const Field start = config.sector_lift ? sector_lift(prob, u0) : u0;
    traj.states.push_back(evaluate(prob, start, 0.0, 0.0, config).state);
    return resume_flow(prob, std::move(traj), config.dt0, config);
}

Trajectory resume_flow(const EnergyProblem& prob, Trajectory traj, double dt, const FlowConfig& config) {
    config.validate();
    if (traj.states.empty()) {
        throw std::invalid_argument("resume_flow needs at least one state");
    }
    const DiscreteSpace& s = prob.grid();
    SlopeResult current = slope(prob, traj.back().u);
    std::vector<bool> inside = excision_membership(config, s, traj.back().u);
    auto steps = static_cast<int>(traj.states.size()) - 1;
    const int first_step = steps;

    while (true) {
        const FlowState& cur = traj.back();
        if ((1.0 + cur.norm) * cur.slope <= config.tol_m) {
            traj.termination = Termination::SlopeBelowTol;
            break;
        }
        if (cur.t >= config.t_max) {
            traj.termination = Termination::MaxTime;
            break;
        }
        if (steps >= config.max_steps) {
            traj.termination = Termination::MaxSteps;
            break;
        }
        if (config.halt_after > 0 && steps >= config.halt_after && steps > first_step) {
            traj.termination = Termination::Interrupted;
            break;
        }
        if (cur.cutoff == 0.0) {
            traj.termination = Termination::FieldVanished;
            break;
        }
        const Field field = cur.cutoff * pseudo_gradient(s, current, cur.u);

        double h = dt;
        if (config.cap_in_neighbourhoods && cur.label != RegionLabel::SignChangingRegion) {
            h = std::min(h, 1.0 / (1.0 + cur.norm));
        }
        h = std::min(h, config.t_max - cur.t);

        bool accepted = false;
        Field trial;
        double change = 0.0;
        while (h >= config.dt_min || (h > 0.0 && h == config.t_max - cur.t)) {
            trial = cur.u - h * field;
            if (config.sector_lift) {
                trial = sector_lift(prob, trial);
            }
            const double required =
                config.armijo * h * cur.cutoff * cur.slope * cur.slope / (1.0 + cur.norm);
            change = energy_difference(prob, cur.u, trial);
            if (std::isfinite(change) && change <= -required) {
                accepted = true;
                break;
            }
            ++traj.rejected_steps;
            h *= 0.5;
        }
        if (!accepted) {
            traj.termination = Termination::StepFailure;
            break;
        }

        Evaluated next = evaluate(prob, trial, cur.t + h, h, config);
        // Accumulated differences keep the recorded energies exactly monotone.
        next.state.energy = cur.energy + change;
        next.state.cutoff = cutoff_rho(config, next.state.energy) * cutoff_psi(config, s, trial);
        // The time grid can fail to advance once t dwarfs h.
        if (!(next.state.t > cur.t)) {
            traj.termination = Termination::StepFailure;
            break;
        }
        current = std::move(next.slope);
        traj.states.push_back(std::move(next.state));
        ++steps;

        const std::vector<bool> now = excision_membership(config, s, traj.back().u);
        for (std::size_t k = 0; k < now.size(); ++k) {
            if (now[k] != inside[k]) {
                traj.excision_log.push_back({traj.states.size() - 1, k, now[k]});
            }
        }
        inside = now;

        dt = std::min(1.5 * h, config.dt_max);
        dt = std::max(dt, config.dt_min);
        if (config.checkpoint_every > 0 && !config.checkpoint_path.empty() && steps % config.checkpoint_every == 0) {
            write_checkpoint(config, traj, dt);
        }
    }
    return traj;
}

InvarianceVerdict monitor_invariance(const Trajectory& traj, double mu0, double tol) {
    if (traj.states.empty()) {
        throw std::invalid_argument("monitor_invariance needs a nonempty trajectory");
    }
    InvarianceVerdict v;
    v.excision_log = traj.excision_log;
    const FlowState& first = traj.states.front();
    const bool watch_plus = first.label == RegionLabel::PositiveRegion || first.label == RegionLabel::Overlap;
    const bool watch_minus = first.label == RegionLabel::NegativeRegion || first.label == RegionLabel::Overlap;
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        const FlowState& st = traj.states[k];
        if (watch_plus) {
            v.max_cone_excess = std::max(v.max_cone_excess, st.d_plus - mu0);
            if (st.d_plus > mu0 + tol) {
                v.stayed_plus = false;
                v.violations.push_back({k, "left D+", st.d_plus});
            }
        }
        if (watch_minus) {
            v.max_cone_excess = std::max(v.max_cone_excess, st.d_minus - mu0);
            if (st.d_minus > mu0 + tol) {
                v.stayed_minus = false;
                v.violations.push_back({k, "left D-", st.d_minus});
            }
        }
        if (k > 0 && !(st.energy <= traj.states[k - 1].energy)) {
            v.monotone = false;
            v.violations.push_back({k, "energy increased", st.energy - traj.states[k - 1].energy});
        }
        const double bound = (first.norm + 1.0) * std::exp(2.0 * (st.t - first.t));
        if (st.norm > bound) {
            v.gronwall = false;
            v.violations.push_back({k, "norm above Gronwall bound", st.norm - bound});
        }
    }
    v.passed = v.violations.empty();
    return v;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const std::string& header_comment) {
    if (!header_comment.empty()) {
        out << "# " << header_comment << '\n';
    }
    out << "t,J,m,d_plus,d_minus,label,dt\n" << std::setprecision(17);
    for (const auto& s : traj.states) {
        out << s.t << ',' << s.energy << ',' << s.slope << ',' << s.d_plus << ',' << s.d_minus << ','
            << to_string(s.label) << ',' << s.dt << '\n';
    }
}

nlohmann::json checkpoint_json(const Trajectory& traj, double next_dt, const std::string& config_hash) {
    nlohmann::json states = nlohmann::json::array();
    for (const auto& s : traj.states) {
        states.push_back({{"t", s.t},
                          {"u", std::vector<double>(s.u.data(), s.u.data() + s.u.size())},
                          {"J", s.energy},
                          {"m", s.slope},
                          {"norm", s.norm},
                          {"d_plus", s.d_plus},
                          {"d_minus", s.d_minus},
                          {"label", to_string(s.label)},
                          {"dt", s.dt},
                          {"cutoff", s.cutoff}});
    }
    nlohmann::json log = nlohmann::json::array();
    for (const auto& e : traj.excision_log) {
        log.push_back({{"state", e.state}, {"point", e.point}, {"entered", e.entered}});
    }
    nlohmann::json j = {{"format", "nodal-trajectory"},
                        {"next_dt", next_dt},
                        {"termination", to_string(traj.termination)},
                        {"rejected_steps", traj.rejected_steps},
                        {"states", std::move(states)},
                        {"excision_log", std::move(log)}};
    if (!config_hash.empty()) {
        j["config_hash"] = config_hash;
    }
    return j;
}

std::pair<Trajectory, double> load_checkpoint(const nlohmann::json& j) {
    if (j.value("format", "") != "nodal-trajectory") {
        throw std::runtime_error("not a trajectory checkpoint");
    }
    Trajectory traj;
    traj.termination = parse_termination(j.at("termination").get<std::string>());
    traj.rejected_steps = j.at("rejected_steps").get<int>();
    for (const auto& s : j.at("states")) {
        FlowState st;
        st.t = s.at("t").get<double>();
        const auto values = s.at("u").get<std::vector<double>>();
        st.u = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
        st.energy = s.at("J").get<double>();
        st.slope = s.at("m").get<double>();
        st.norm = s.at("norm").get<double>();
        st.d_plus = s.at("d_plus").get<double>();
        st.d_minus = s.at("d_minus").get<double>();
        st.label = parse_region(s.at("label").get<std::string>());
        st.dt = s.at("dt").get<double>();
        st.cutoff = s.at("cutoff").get<double>();
        traj.states.push_back(std::move(st));
    }
    for (const auto& e : j.at("excision_log")) {
        traj.excision_log.push_back(
            {e.at("state").get<std::size_t>(), e.at("point").get<std::size_t>(), e.at("entered").get<bool>()});
    }
    if (traj.states.empty()) {
        throw std::runtime_error("checkpoint holds no states");
    }
    return {std::move(traj), j.at("next_dt").get<double>()};
}

void to_json(nlohmann::json& j, const InvarianceVerdict& v) {
    nlohmann::json violations = nlohmann::json::array();
    for (const auto& x : v.violations) {
        violations.push_back({{"state", x.state}, {"kind", x.kind}, {"value", x.value}});
    }
    j = {{"passed", v.passed},
         {"stayed_plus", v.stayed_plus},
         {"stayed_minus", v.stayed_minus},
         {"monotone", v.monotone},
         {"gronwall", v.gronwall},
         {"max_cone_excess", v.max_cone_excess},
         {"violations", std::move(violations)},
         {"excision_events", v.excision_log.size()}};
}

}  // namespace nodal
