#include "nodal/runner.hpp"

#include "nodal/artifacts.hpp"
#include "nodal/cone_geometry.hpp"
#include "nodal/random.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace nodal {

namespace {

using nlohmann::json;

SchauderOptions schauder_options(const RunConfig& cfg) {
    SchauderOptions o;
    o.tolerance = cfg.tolerances.schauder;
    return o;
}

SamplePlan sample_plan(const RunConfig& cfg, const DiscreteSpace& space) {
    SamplePlan plan;
    plan.space_dimension = cfg.grid.dimension;
    if (!cfg.potential.coefficient().autonomous()) {
        const Eigen::Index stride = std::max<Eigen::Index>(1, space.size() / 16);
        for (Eigen::Index i = 0; i < space.size(); i += stride) {
            plan.points.push_back(space.point(i));
        }
    }
    return plan;
}

json hypotheses_json(const HypothesisReport& r) {
    json checks = json::array();
    for (const auto& c : r.checks) {
        checks.push_back(
            {{"id", c.id}, {"passed", c.passed}, {"worst", c.worst}, {"witness_s", c.witness_s}, {"note", c.note}});
    }
    return {{"passed", r.all_passed()},
            {"superlinear_quotient_monotone", r.superlinear_quotient_monotone},
            {"checks", std::move(checks)}};
}

struct Mu0Choice {
    double mu0 = 0.5;
    double fitted_c = -1.0;
    json record;
};

Mu0Choice choose_mu0(const EnergyProblem& prob, const RunConfig& cfg, const SeedPlan& seeds) {
    Mu0Choice c;
    if (cfg.mu0) {
        c.mu0 = *cfg.mu0;
        c.record = {{"mode", "fixed"}, {"mu0", c.mu0}};
        return c;
    }
    const Mu0Selection sel = select_mu0(prob, cfg.checks.mu0_samples_per_level, seeds.mu0, schauder_options(cfg));
    c.mu0 = sel.mu0;
    c.fitted_c = sel.fitted_c;
    c.record = sel;
    c.record["mode"] = "auto";
    return c;
}

Field unit_mode(const DiscreteSpace& space, int index) {
    const Field& phi = space.eigenpair(index).vector;
    return phi / space.h1_norm(phi);
}

Field start_field(const DiscreteSpace& space, const StartSpec& start) {
    if (start.name == "zero") {
        return space.zeros();
    }
    if (start.name == "plus_phi1") {
        return start.amplitude * unit_mode(space, 0);
    }
    if (start.name == "minus_phi1") {
        return -start.amplitude * unit_mode(space, 0);
    }
    if (start.name == "phi2") {
        return start.amplitude * unit_mode(space, 1);
    }
    std::ifstream in(start.name);
    if (!in) {
        throw ConfigError("start must be zero, plus_phi1, minus_phi1, phi2 or a readable field CSV: " + start.name);
    }
    try {
        return read_field_csv(in, space);
    } catch (const std::exception& e) {
        throw ConfigError("start file " + start.name + ": " + e.what());
    }
}

/// Prints and logs a failure; returns the exit code.
int fail(std::ostream& console, ArtifactWriter* out, const std::string& stage, const std::string& what, int code) {
    const std::string line = "stage " + stage + ": " + what;
    console << line << '\n';
    if (out) {
        out->log(line);
    }
    return code;
}

}  // namespace

SeedPlan::SeedPlan(std::uint64_t seed) {
    Rng rng(seed);
    mu0 = rng.next();
    schauder = rng.next();
    scan = rng.next();
    slope_samples = rng.next();
}

RunConfig resolve_config(const std::string& path, const Overrides& overrides) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path);
    }
    json document;
    try {
        document = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    if (!document.is_object()) {
        throw ConfigError("config: expected a JSON object");
    }
    if (overrides.seed) {
        document["seed"] = *overrides.seed;
    }
    if (overrides.start) {
        document["start"]["name"] = *overrides.start;
    }
    if (overrides.spectrum_k) {
        document["spectrum_k"] = *overrides.spectrum_k;
    }
    RunConfig cfg = parse_config(document);
    if (overrides.output) {
        cfg.output = *overrides.output;
    }
    if (overrides.workers) {
        cfg.minimax.workers = *overrides.workers;
    }
    return cfg;
}

int cmd_spectrum(const RunConfig& cfg, std::ostream& console) {
    ArtifactWriter out(cfg.output, cfg.hash);
    out.write_json("config.json", cfg.canonical);
    std::string stage = "space";
    try {
        const auto space = build_space(cfg.grid);
        stage = "eigenpairs";
        const auto pairs = space->eigenpairs(cfg.spectrum_k);
        std::ostringstream csv;
        csv << "# config_hash=" << cfg.hash << '\n';
        csv << (cfg.grid.dimension == 1 ? "index,lambda,x,phi\n" : "index,lambda,x,y,phi\n");
        csv << std::setprecision(17);
        json values = json::array();
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            values.push_back(pairs[k].value);
            for (Eigen::Index i = 0; i < space->size(); ++i) {
                const Point& p = space->point(i);
                csv << k + 1 << ',' << pairs[k].value << ',' << p[0] << ',';
                if (cfg.grid.dimension == 2) {
                    csv << p[1] << ',';
                }
                csv << pairs[k].vector[i] << '\n';
            }
        }
        out.write_text("spectrum.csv", csv.str());
        out.write_json("spectrum.json", {{"eigenvalues", values}, {"normalization", "M-orthonormal"}});
        out.log("spectrum: " + std::to_string(pairs.size()) + " eigenpairs");
        console << "lambda_1 = " << std::setprecision(12) << pairs.front().value << '\n';
        return ExitSuccess;
    } catch (const ConfigError& e) {
        return fail(console, &out, stage, e.what(), ExitConfigError);
    } catch (const std::exception& e) {
        return fail(console, &out, stage, e.what(), ExitConfigError);
    }
}

int cmd_solve(const RunConfig& cfg, std::ostream& console) {
    ArtifactWriter out(cfg.output, cfg.hash);
    out.write_json("config.json", cfg.canonical);
    std::string stage = "space";
    try {
        const SeedPlan seeds(cfg.seed);
        const auto space = build_space(cfg.grid);
        const EnergyProblem prob(space, cfg.potential, cfg.lambda);

        stage = "hypotheses";
        const HypothesisReport hyp = check_hypotheses(cfg.potential, sample_plan(cfg, *space));
        out.write_json("hypotheses.json", hypotheses_json(hyp));
        out.log(std::string("hypotheses ") + (hyp.all_passed() ? "passed" : "failed"));

        stage = "mu0";
        const Mu0Choice mu = choose_mu0(prob, cfg, seeds);
        const InvarianceReport schauder = check_schauder(prob, mu.mu0, cfg.checks.schauder_samples, seeds.schauder,
                                                         {}, schauder_options(cfg), mu.fitted_c);
        json inv = schauder;
        inv["selection"] = mu.record;
        out.write_json("invariance.json", inv);
        out.log("mu0 = " + std::to_string(mu.mu0));
        if (!schauder.passed) {
            throw InvarianceViolationError("Schauder check failed: worst ratio " + std::to_string(schauder.worst_ratio));
        }

        stage = "frame";
        ScanConfig scan = cfg.scan;
        scan.seed = seeds.scan;
        const LinkingFrame frame = build_frame(prob, mu.mu0, scan);
        out.write_json("frame.json", frame);

        stage = "minimax";
        MinimaxConfig mm = cfg.minimax;
        mm.base_flow.dt0 = cfg.flow.dt0;
        mm.base_flow.dt_min = cfg.flow.dt_min;
        mm.base_flow.dt_max = cfg.flow.dt_max;
        mm.base_flow.armijo = cfg.flow.armijo;
        const MinimaxReport rep = minimax_iterate(prob, frame, mm);
        out.write_json("minimax.json", rep);
        out.write_trajectory("refinement.csv", rep.refinement);

        stage = "classification";
        const InvarianceVerdict verdict = monitor_invariance(rep.refinement, mu.mu0, cfg.tolerances.invariance);
        const bool converged = rep.converged && rep.critical_slope <= cfg.tolerances.slope;
        out.write_field("solution.csv", *space, rep.critical);
        out.write_json("solution.json", {{"label", to_string(rep.label)},
                                         {"energy", rep.critical_energy},
                                         {"slope", rep.critical_slope},
                                         {"norm", space->h1_norm(rep.critical)},
                                         {"max_abs", rep.critical.cwiseAbs().maxCoeff()},
                                         {"d_plus", rep.d_plus},
                                         {"d_minus", rep.d_minus},
                                         {"mu0", mu.mu0},
                                         {"sign_changes", rep.sign_changes},
                                         {"alpha", rep.alpha},
                                         {"beta", rep.beta},
                                         {"r_final", rep.r_final},
                                         {"hypotheses_passed", hyp.all_passed()},
                                         {"refinement_invariance", verdict},
                                         {"converged", converged}});
        std::ostringstream msg;
        msg << std::setprecision(10) << "solution " << to_string(rep.label) << " J=" << rep.critical_energy
            << " m=" << rep.critical_slope << " sign_changes=" << rep.sign_changes;
        out.log(msg.str());
        console << msg.str() << '\n';
        if (!converged) {
            return fail(console, &out, stage, "minimax did not reach a sign-changing critical point", ExitNotConverged);
        }
        return ExitSuccess;
    } catch (const NoLinkingWindow& e) {
        out.write_json("linking_scan.json", {{"error", e.what()}, {"scan", e.scan}});
        return fail(console, &out, stage, e.what(), ExitNoLinkingWindow);
    } catch (const GapViolation& e) {
        out.write_json("linking_scan.json", {{"error", e.what()}, {"alpha", e.alpha}, {"beta", e.beta}});
        return fail(console, &out, stage, e.what(), ExitNoLinkingWindow);
    } catch (const InvarianceViolationError& e) {
        return fail(console, &out, stage, e.what(), ExitInvarianceViolation);
    } catch (const ConfigError& e) {
        return fail(console, &out, stage, e.what(), ExitConfigError);
    } catch (const std::exception& e) {
        return fail(console, &out, stage, e.what(), ExitNotConverged);
    }
}

int cmd_flow(const RunConfig& cfg, const FlowOptions& options, std::ostream& console) {
    ArtifactWriter out(cfg.output, cfg.hash);
    out.write_json("config.json", cfg.canonical);
    std::string stage = "space";
    try {
        const SeedPlan seeds(cfg.seed);
        const auto space = build_space(cfg.grid);
        const EnergyProblem prob(space, cfg.potential, cfg.lambda);

        stage = "mu0";
        const Mu0Choice mu = choose_mu0(prob, cfg, seeds);

        stage = "flow";
        FlowConfig flow = cfg.flow;
        flow.mu0 = mu.mu0;
        flow.checkpoint_path = out.path("checkpoint.json").string();
        flow.checkpoint_hash = cfg.hash;
        flow.halt_after = options.halt_after;
        Trajectory traj;
        if (options.resume) {
            stage = "resume";
            const json saved = read_json_file(out.path("checkpoint.json"));
            if (saved.value("config_hash", std::string()) != cfg.hash) {
                throw ConfigError("checkpoint was written by a different configuration");
            }
            auto [partial, next_dt] = load_checkpoint(saved);
            out.log("resuming from state " + std::to_string(partial.states.size() - 1));
            traj = resume_flow(prob, std::move(partial), next_dt, flow);
        } else {
            traj = integrate_flow(prob, start_field(*space, cfg.start), flow);
        }

        stage = "artifacts";
        const InvarianceVerdict verdict = monitor_invariance(traj, mu.mu0, cfg.tolerances.invariance);
        const FlowState& end = traj.back();
        out.write_trajectory("trajectory.csv", traj);
        out.write_json("trajectory.json", checkpoint_json(traj, end.dt, cfg.hash));
        out.write_json("invariance.json", verdict);
        out.write_json("flow.json", {{"start", cfg.start.name},
                                     {"amplitude", cfg.start.amplitude},
                                     {"mu0", mu.mu0},
                                     {"termination", to_string(traj.termination)},
                                     {"steps", traj.states.size() - 1},
                                     {"rejected_steps", traj.rejected_steps},
                                     {"t", end.t},
                                     {"energy", end.energy},
                                     {"slope", end.slope},
                                     {"norm", end.norm},
                                     {"d_plus", end.d_plus},
                                     {"d_minus", end.d_minus},
                                     {"label", to_string(end.label)},
                                     {"sign_changes", count_sign_changes(*space, end.u)}});
        std::ostringstream msg;
        msg << std::setprecision(10) << "flow " << to_string(traj.termination) << " after "
            << traj.states.size() - 1 << " steps: J=" << end.energy << " m=" << end.slope << " "
            << to_string(end.label);
        out.log(msg.str());
        console << msg.str() << '\n';
        if (!verdict.passed) {
            return fail(console, &out, "invariance", "flow monitors reported violations", ExitInvarianceViolation);
        }
        if (traj.termination == Termination::MaxSteps || traj.termination == Termination::StepFailure) {
            return fail(console, &out, stage, "flow stopped with " + to_string(traj.termination), ExitNotConverged);
        }
        return ExitSuccess;
    } catch (const ConfigError& e) {
        return fail(console, &out, stage, e.what(), ExitConfigError);
    } catch (const std::exception& e) {
        return fail(console, &out, stage, e.what(), ExitNotConverged);
    }
}

namespace {

ConeSet set_of(RegionLabel label, double mu0) {
    switch (label) {
        case RegionLabel::PositiveRegion:
            return ConeSet::plus(mu0);
        case RegionLabel::NegativeRegion:
            return ConeSet::minus(mu0);
        case RegionLabel::Overlap:
            return ConeSet::both(mu0);
        case RegionLabel::SignChangingRegion:
            break;
    }
    return ConeSet::whole();
}

json slope_case(const EnergyProblem& prob, const std::string& name, const Field& u, double mu0, double tol,
                bool& passed) {
    const auto [dp, dm] = dist_to_cones(prob.grid(), u);
    const RegionLabel label = classify(dp, dm, mu0);
    const SetSlopeResult rel = slope_on_set(prob, u, set_of(label, mu0));
    const SlopeResult full = slope(prob, u);
    // The set-relative slope never exceeds the slope; near-zero values force a critical point.
    const bool ordered = rel.value <= full.value * (1.0 + 1e-8) + 1e-10;
    const bool implication = rel.value > tol || full.value <= 10.0 * tol;
    const bool ok = ordered && implication && rel.criterion_agrees;
    passed = passed && ok;
    return {{"case", name},           {"label", to_string(label)},  {"m_D", rel.value},
            {"m", full.value},        {"gap", rel.gap},             {"normal_cone", rel.normal_cone},
            {"stationary", rel.stationary}, {"ordered", ordered},   {"implication", implication},
            {"criterion_agrees", rel.criterion_agrees}, {"passed", ok}};
}

}  // namespace

int cmd_verify(const RunConfig& cfg, std::ostream& console) {
    ArtifactWriter out(cfg.output, cfg.hash);
    std::string stage = "space";
    try {
        const SeedPlan seeds(cfg.seed);
        const auto space = build_space(cfg.grid);
        const EnergyProblem prob(space, cfg.potential, cfg.lambda);
        json report;
        bool all = true;

        stage = "hypotheses";
        const HypothesisReport hyp = check_hypotheses(cfg.potential, sample_plan(cfg, *space));
        report["hypotheses"] = hypotheses_json(hyp);
        all = all && hyp.all_passed();

        stage = "schauder";
        double mu0 = cfg.mu0.value_or(0.5);
        try {
            const Mu0Choice mu = choose_mu0(prob, cfg, seeds);
            mu0 = mu.mu0;
            const InvarianceReport r = check_schauder(prob, mu.mu0, cfg.checks.schauder_samples, seeds.schauder, {},
                                                      schauder_options(cfg), mu.fitted_c);
            json s = r;
            s["selection"] = mu.record;
            s["passed"] = r.passed && r.inequality_holds;
            report["schauder"] = s;
            all = all && r.passed && r.inequality_holds;
        } catch (const std::exception& e) {
            report["schauder"] = {{"passed", false}, {"error", e.what()}};
            all = false;
        }

        stage = "slope_cross_validation";
        {
            bool passed = true;
            json cases = json::array();
            const double tol = cfg.tolerances.slope;
            cases.push_back(slope_case(prob, "zero", space->zeros(), mu0, tol, passed));
            FlowConfig lifted = cfg.flow;
            lifted.mu0 = mu0;
            lifted.sector_lift = true;
            lifted.tol_m = std::min(lifted.tol_m, tol);
            for (const char* name : {"plus_phi1", "minus_phi1", "phi2"}) {
                const Field u0 = start_field(*space, {name, cfg.start.amplitude});
                const Trajectory t = integrate_flow(prob, u0, lifted);
                cases.push_back(slope_case(prob, std::string("lifted_flow_from_") + name, t.back().u, mu0, tol, passed));
            }
            Rng rng(seeds.slope_samples);
            const int modes = std::min<int>(8, static_cast<int>(space->size()));
            for (int k = 0; k < cfg.checks.slope_samples; ++k) {
                Field u = space->zeros();
                for (int i = 0; i < modes; ++i) {
                    u += rng.normal() / (1.0 + i) * unit_mode(*space, i);
                }
                u *= cfg.start.amplitude * rng.uniform(0.1, 1.0) / space->h1_norm(u);
                const int kind = k % 3;
                const ConeSet target = kind == 0 ? ConeSet::plus(mu0) : kind == 1 ? ConeSet::minus(mu0) : ConeSet::whole();
                u = project_onto(*space, u, target);
                cases.push_back(slope_case(prob, "random_" + std::to_string(k), u, mu0, tol, passed));
            }
            report["slope_cross_validation"] = {{"passed", passed}, {"cases", std::move(cases)}};
            all = all && passed;
        }

        stage = "ps_monitor";
        {
            const std::filesystem::path path =
                cfg.trajectory.empty() ? out.path("trajectory.json") : std::filesystem::path(cfg.trajectory);
            Trajectory traj;
            std::string source = path.string();
            if (std::filesystem::exists(path)) {
                traj = load_checkpoint(read_json_file(path)).first;
            } else {
                FlowConfig flow = cfg.flow;
                flow.mu0 = mu0;
                traj = integrate_flow(prob, start_field(*space, cfg.start), flow);
                source = "generated from start " + cfg.start.name;
            }
            std::vector<HistoryEntry> history;
            json mismatches = json::array();
            for (std::size_t i = 0; i < traj.states.size(); ++i) {
                const FlowState& s = traj.states[i];
                if (s.u.size() != space->size()) {
                    throw std::runtime_error("stored trajectory does not match the grid");
                }
                const double j = energy(prob, s.u);
                const double m = slope(prob, s.u).value;
                if (std::abs(j - s.energy) > 1e-8 * (1.0 + std::abs(j)) || std::abs(m - s.slope) > 1e-8 * (1.0 + m)) {
                    mismatches.push_back({{"state", i}, {"stored_J", s.energy}, {"J", j}, {"stored_m", s.slope}, {"m", m}});
                }
                history.push_back({s.u, j, m});
            }
            const PSReport ps = ps_monitor(*space, history, cfg.tolerances.ps);
            const bool passed = ps.passed && mismatches.empty();
            report["ps_monitor"] = {{"passed", passed},
                                    {"source", source},
                                    {"consistent_with_recomputation", mismatches.empty()},
                                    {"mismatches", std::move(mismatches)},
                                    {"report", ps}};
            all = all && passed;
        }

        report["passed"] = all;
        out.write_json("verify.json", report);
        for (const char* section : {"hypotheses", "schauder", "slope_cross_validation", "ps_monitor"}) {
            const bool ok = report[section]["passed"].get<bool>();
            console << section << ": " << (ok ? "pass" : "FAIL") << '\n';
            out.log(std::string("verify ") + section + (ok ? " pass" : " FAIL"));
        }
        return all ? ExitSuccess : ExitCheckFailed;
    } catch (const ConfigError& e) {
        return fail(console, &out, stage, e.what(), ExitConfigError);
    } catch (const std::exception& e) {
        return fail(console, &out, stage, e.what(), ExitCheckFailed);
    }
}

}  // namespace nodal
