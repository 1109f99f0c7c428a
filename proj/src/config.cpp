#include "nodal/config.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <initializer_list>
#include <iomanip>
#include <sstream>

namespace nodal {

namespace {

using nlohmann::json;

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
        throw ConfigError(where + ": expected an object");
    }
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed) {
            known = known || item.key() == a;
        }
        if (!known) {
            throw ConfigError(where + ": unknown key '" + item.key() + "'");
        }
    }
}

template <typename T>
void read(const json& j, const char* key, const std::string& where, T& target) {
    if (!j.contains(key)) {
        return;
    }
    try {
        target = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

void positive(double v, const std::string& name) {
    if (!(v > 0.0)) {
        throw ConfigError(name + " must be positive");
    }
}

/// "auto" or a positive number.
std::optional<double> read_auto(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) {
        return std::nullopt;
    }
    const json& v = j.at(key);
    if (v.is_string() && v.get<std::string>() == "auto") {
        return std::nullopt;
    }
    if (!v.is_number()) {
        throw ConfigError(where + "." + key + ": expected \"auto\" or a number");
    }
    return v.get<double>();
}

json auto_value(const std::optional<double>& v) { return v ? json(*v) : json("auto"); }

GridSpec parse_grid(const json& j) {
    only_keys(j, "grid", {"dimension", "lower", "upper", "nodes"});
    GridSpec g;
    read(j, "dimension", "grid", g.dimension);
    if (g.dimension != 1 && g.dimension != 2) {
        throw ConfigError("grid.dimension must be 1 or 2");
    }
    std::vector<double> lower{0.0, 0.0};
    std::vector<double> upper{1.0, 1.0};
    std::vector<int> nodes;
    read(j, "lower", "grid", lower);
    read(j, "upper", "grid", upper);
    read(j, "nodes", "grid", nodes);
    const auto d = static_cast<std::size_t>(g.dimension);
    if (lower.size() < d || upper.size() < d || nodes.size() != d) {
        throw ConfigError("grid: lower/upper/nodes need one entry per dimension");
    }
    for (std::size_t a = 0; a < d; ++a) {
        g.lower[a] = lower[a];
        g.upper[a] = upper[a];
        g.nodes[a] = nodes[a];
    }
    if (g.dimension == 1) {
        g.lower[1] = 0.0;
        g.upper[1] = 1.0;
        g.nodes[1] = 1;
    }
    try {
        g.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("grid: ") + e.what());
    }
    return g;
}

json grid_json(const GridSpec& g) {
    const auto d = static_cast<std::size_t>(g.dimension);
    return {{"dimension", g.dimension},
            {"lower", std::vector<double>(g.lower.begin(), g.lower.begin() + d)},
            {"upper", std::vector<double>(g.upper.begin(), g.upper.begin() + d)},
            {"nodes", std::vector<int>(g.nodes.begin(), g.nodes.begin() + d)}};
}

/// Returns the potential and its normalized description.
std::pair<PiecewisePotential, json> parse_potential(const json& raw) {
    json j = raw.is_string() ? json{{"builtin", raw}} : raw;
    only_keys(j, "potential", {"builtin", "breakpoints", "coefficients", "growth", "coefficient"});
    PiecewisePotential p;
    json out;
    try {
        if (j.contains("builtin")) {
            if (j.contains("breakpoints") || j.contains("coefficients")) {
                throw ConfigError("potential: builtin and table are exclusive");
            }
            const auto name = j.at("builtin").get<std::string>();
            p = PiecewisePotential::builtin(name);
            out["builtin"] = name;
        } else {
            std::vector<double> breaks;
            std::vector<std::vector<double>> coeffs;
            read(j, "breakpoints", "potential", breaks);
            read(j, "coefficients", "potential", coeffs);
            if (coeffs.size() != breaks.size() + 1) {
                throw ConfigError("potential: need one coefficient row per piece");
            }
            p = PiecewisePotential::polynomial_table(breaks, coeffs);
            out["breakpoints"] = breaks;
            out["coefficients"] = coeffs;
        }
    } catch (const InvalidPotential& e) {
        throw ConfigError(std::string("potential: ") + e.what());
    } catch (const json::exception&) {
        throw ConfigError("potential: wrong type");
    }
    GrowthParameters g = p.growth();
    if (j.contains("growth")) {
        only_keys(j.at("growth"), "potential.growth", {"a1", "q", "mu", "mu_hat"});
        read(j.at("growth"), "a1", "potential.growth", g.a1);
        read(j.at("growth"), "q", "potential.growth", g.q);
        read(j.at("growth"), "mu", "potential.growth", g.mu);
        read(j.at("growth"), "mu_hat", "potential.growth", g.mu_hat);
    }
    if (!(g.q > 0.0) || !(g.mu > 0.0) || !(g.a1 > 0.0)) {
        throw ConfigError("potential.growth: a1, q and mu must be positive");
    }
    CoefficientField c = p.coefficient();
    if (j.contains("coefficient")) {
        only_keys(j.at("coefficient"), "potential.coefficient", {"c0", "cx", "cy"});
        read(j.at("coefficient"), "c0", "potential.coefficient", c.c0);
        read(j.at("coefficient"), "cx", "potential.coefficient", c.cx);
        read(j.at("coefficient"), "cy", "potential.coefficient", c.cy);
    }
    p = p.with_growth(g).with_coefficient(c);
    out["growth"] = {{"a1", g.a1}, {"q", g.q}, {"mu", g.mu}, {"mu_hat", g.mu_hat}};
    out["coefficient"] = {{"c0", c.c0}, {"cx", c.cx}, {"cy", c.cy}};
    return {std::move(p), std::move(out)};
}

void parse_flow(const json& j, FlowConfig& f) {
    only_keys(j, "flow", {"dt0", "dt_min", "dt_max", "tol_m", "t_max", "max_steps", "armijo", "checkpoint_every"});
    read(j, "dt0", "flow", f.dt0);
    read(j, "dt_min", "flow", f.dt_min);
    read(j, "dt_max", "flow", f.dt_max);
    read(j, "tol_m", "flow", f.tol_m);
    read(j, "t_max", "flow", f.t_max);
    read(j, "max_steps", "flow", f.max_steps);
    read(j, "armijo", "flow", f.armijo);
    read(j, "checkpoint_every", "flow", f.checkpoint_every);
    if (f.checkpoint_every < 0) {
        throw ConfigError("flow.checkpoint_every must be nonnegative");
    }
}

json flow_json(const FlowConfig& f) {
    return {{"dt0", f.dt0},         {"dt_min", f.dt_min},       {"dt_max", f.dt_max},
            {"tol_m", f.tol_m},     {"t_max", f.t_max},         {"max_steps", f.max_steps},
            {"armijo", f.armijo},   {"checkpoint_every", f.checkpoint_every}};
}

void parse_scan(const json& j, ScanConfig& s) {
    only_keys(j, "scan",
              {"radius_min", "radius_max", "ratio", "sphere_samples", "circle_samples", "modes", "radius_Q",
               "radius_T"});
    read(j, "radius_min", "scan", s.radius_min);
    read(j, "radius_max", "scan", s.radius_max);
    read(j, "ratio", "scan", s.ratio);
    read(j, "sphere_samples", "scan", s.sphere_samples);
    read(j, "circle_samples", "scan", s.circle_samples);
    read(j, "modes", "scan", s.modes);
    s.radius_q = read_auto(j, "radius_Q", "scan");
    s.radius_t = read_auto(j, "radius_T", "scan");
    positive(s.radius_min, "scan.radius_min");
    if (!(s.radius_max > s.radius_min) || !(s.ratio > 1.0)) {
        throw ConfigError("scan: need radius_max > radius_min and ratio > 1");
    }
    if (s.sphere_samples < 1 || s.circle_samples < 3 || s.modes < 2) {
        throw ConfigError("scan: sample counts too small");
    }
    if (s.radius_q) {
        positive(*s.radius_q, "scan.radius_Q");
    }
    if (s.radius_t) {
        positive(*s.radius_t, "scan.radius_T");
    }
}

json scan_json(const ScanConfig& s) {
    return {{"radius_min", s.radius_min},         {"radius_max", s.radius_max},
            {"ratio", s.ratio},                   {"sphere_samples", s.sphere_samples},
            {"circle_samples", s.circle_samples}, {"modes", s.modes},
            {"radius_Q", auto_value(s.radius_q)}, {"radius_T", auto_value(s.radius_t)}};
}

void parse_minimax(const json& j, MinimaxConfig& m) {
    only_keys(j, "minimax",
              {"ns", "nt", "arc_points", "max_iterations", "stabilization_tol", "eps_rel", "steps_per_sweep",
               "horizon_cap", "max_restarts", "excise_detected", "detect_steps", "delta_rel", "workers",
               "refine_max_steps"});
    read(j, "ns", "minimax", m.ns);
    read(j, "nt", "minimax", m.nt);
    read(j, "arc_points", "minimax", m.arc_points);
    read(j, "max_iterations", "minimax", m.max_iterations);
    read(j, "stabilization_tol", "minimax", m.stabilization_tol);
    read(j, "eps_rel", "minimax", m.eps_rel);
    read(j, "steps_per_sweep", "minimax", m.steps_per_sweep);
    read(j, "horizon_cap", "minimax", m.horizon_cap);
    read(j, "max_restarts", "minimax", m.max_restarts);
    read(j, "excise_detected", "minimax", m.excise_detected);
    read(j, "detect_steps", "minimax", m.detect_steps);
    read(j, "delta_rel", "minimax", m.delta_rel);
    read(j, "workers", "minimax", m.workers);
    read(j, "refine_max_steps", "minimax", m.refine_flow.max_steps);
    if (m.ns < 2 || m.nt < 1 || m.arc_points < 3 || m.max_iterations < 1 || m.steps_per_sweep < 1 ||
        m.detect_steps < 1 || m.refine_flow.max_steps < 1) {
        throw ConfigError("minimax: counts too small");
    }
    positive(m.eps_rel, "minimax.eps_rel");
    positive(m.horizon_cap, "minimax.horizon_cap");
    positive(m.delta_rel, "minimax.delta_rel");
}

json minimax_json(const MinimaxConfig& m) {
    return {{"ns", m.ns},
            {"nt", m.nt},
            {"arc_points", m.arc_points},
            {"max_iterations", m.max_iterations},
            {"stabilization_tol", m.stabilization_tol},
            {"eps_rel", m.eps_rel},
            {"steps_per_sweep", m.steps_per_sweep},
            {"horizon_cap", m.horizon_cap},
            {"max_restarts", m.max_restarts},
            {"excise_detected", m.excise_detected},
            {"detect_steps", m.detect_steps},
            {"delta_rel", m.delta_rel},
            {"refine_max_steps", m.refine_flow.max_steps}};
}

}  // namespace

RunConfig parse_config(const json& document) {
    only_keys(document, "config",
              {"grid", "potential", "lambda", "mu0", "flow", "scan", "minimax", "tolerances", "checks", "start",
               "spectrum_k", "seed", "output", "trajectory"});
    RunConfig cfg;
    if (!document.contains("grid") || !document.contains("potential")) {
        throw ConfigError("config: grid and potential are required");
    }
    cfg.grid = parse_grid(document.at("grid"));
    auto [potential, potential_json] = parse_potential(document.at("potential"));
    cfg.potential = std::move(potential);
    read(document, "lambda", "config", cfg.lambda);
    positive(cfg.lambda, "lambda");
    cfg.mu0 = read_auto(document, "mu0", "config");
    if (cfg.mu0 && !(*cfg.mu0 > 0.0 && *cfg.mu0 < 1.0)) {
        throw ConfigError("mu0 must lie in (0, 1)");
    }
    if (document.contains("flow")) {
        parse_flow(document.at("flow"), cfg.flow);
    }
    try {
        cfg.flow.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("flow: ") + e.what());
    }
    if (document.contains("scan")) {
        parse_scan(document.at("scan"), cfg.scan);
    }
    if (document.contains("minimax")) {
        parse_minimax(document.at("minimax"), cfg.minimax);
    }
    if (document.contains("tolerances")) {
        const json& t = document.at("tolerances");
        only_keys(t, "tolerances",
                  {"slope", "schauder", "invariance", "ps_weighted_slope", "ps_energy", "ps_cauchy"});
        read(t, "slope", "tolerances", cfg.tolerances.slope);
        read(t, "schauder", "tolerances", cfg.tolerances.schauder);
        read(t, "invariance", "tolerances", cfg.tolerances.invariance);
        read(t, "ps_weighted_slope", "tolerances", cfg.tolerances.ps.weighted_slope);
        read(t, "ps_energy", "tolerances", cfg.tolerances.ps.energy);
        read(t, "ps_cauchy", "tolerances", cfg.tolerances.ps.cauchy);
    }
    positive(cfg.tolerances.slope, "tolerances.slope");
    positive(cfg.tolerances.schauder, "tolerances.schauder");
    positive(cfg.tolerances.invariance, "tolerances.invariance");
    cfg.minimax.tol_m = cfg.tolerances.slope;
    if (document.contains("checks")) {
        const json& c = document.at("checks");
        only_keys(c, "checks", {"schauder_samples", "mu0_samples_per_level", "slope_samples"});
        read(c, "schauder_samples", "checks", cfg.checks.schauder_samples);
        read(c, "mu0_samples_per_level", "checks", cfg.checks.mu0_samples_per_level);
        read(c, "slope_samples", "checks", cfg.checks.slope_samples);
        if (cfg.checks.schauder_samples < 1 || cfg.checks.mu0_samples_per_level < 1 || cfg.checks.slope_samples < 0) {
            throw ConfigError("checks: sample counts too small");
        }
    }
    if (document.contains("start")) {
        const json& s = document.at("start");
        only_keys(s, "start", {"name", "amplitude"});
        read(s, "name", "start", cfg.start.name);
        read(s, "amplitude", "start", cfg.start.amplitude);
    }
    read(document, "spectrum_k", "config", cfg.spectrum_k);
    if (cfg.spectrum_k < 1 || static_cast<std::size_t>(cfg.spectrum_k) > cfg.grid.node_count()) {
        throw ConfigError("spectrum_k out of range");
    }
    read(document, "seed", "config", cfg.seed);
    read(document, "output", "config", cfg.output);
    read(document, "trajectory", "config", cfg.trajectory);

    cfg.canonical = {{"grid", grid_json(cfg.grid)},
                     {"potential", potential_json},
                     {"lambda", cfg.lambda},
                     {"mu0", auto_value(cfg.mu0)},
                     {"flow", flow_json(cfg.flow)},
                     {"scan", scan_json(cfg.scan)},
                     {"minimax", minimax_json(cfg.minimax)},
                     {"tolerances",
                      {{"slope", cfg.tolerances.slope},
                       {"schauder", cfg.tolerances.schauder},
                       {"invariance", cfg.tolerances.invariance},
                       {"ps_weighted_slope", cfg.tolerances.ps.weighted_slope},
                       {"ps_energy", cfg.tolerances.ps.energy},
                       {"ps_cauchy", cfg.tolerances.ps.cauchy}}},
                     {"checks",
                      {{"schauder_samples", cfg.checks.schauder_samples},
                       {"mu0_samples_per_level", cfg.checks.mu0_samples_per_level},
                       {"slope_samples", cfg.checks.slope_samples}}},
                     {"start", {{"name", cfg.start.name}, {"amplitude", cfg.start.amplitude}}},
                     {"spectrum_k", cfg.spectrum_k},
                     {"seed", cfg.seed}};
    cfg.hash = sha256_hex(cfg.canonical.dump());
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path);
    }
    json document;
    try {
        document = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error: " + std::string(e.what()));
    }
    return parse_config(document);
}

std::string sha256_hex(const std::string& text) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(text.data(), text.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 failed");
    }
    std::ostringstream out;
    out << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < length; ++i) {
        out << std::setw(2) << static_cast<int>(digest[i]);
    }
    return out.str();
}

}  // namespace nodal
