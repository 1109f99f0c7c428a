#pragma once

#include "nodal/descending_flow.hpp"
#include "nodal/linking_minimax.hpp"
#include "nodal/mesh_space.hpp"
#include "nodal/potential.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace nodal {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunTolerances {
    /// Slope bound for a converged solution.
    double slope = 1e-6;
    double schauder = 1e-6;
    double invariance = 1e-7;
    PSTolerances ps;
};

struct CheckPlan {
    int schauder_samples = 500;
    int mu0_samples_per_level = 10;
    /// Random fields used by the slope cross-validation in verify.
    int slope_samples = 20;
};

struct StartSpec {
    /// zero, plus_phi1, minus_phi1, phi2, or a path to a field CSV.
    std::string name = "phi2";
    /// Multiplies the H¹-normalized eigenfunction.
    double amplitude = 10.0;
};

struct RunConfig {
    GridSpec grid;
    PiecewisePotential potential;
    double lambda = 1.0;
    /// Unset means "auto".
    std::optional<double> mu0;
    FlowConfig flow;
    ScanConfig scan;
    MinimaxConfig minimax;
    RunTolerances tolerances;
    CheckPlan checks;
    StartSpec start;
    int spectrum_k = 6;
    std::uint64_t seed = 1;
    std::string output = "out";
    /// Stored trajectory checked by verify; empty means <output>/trajectory.json.
    std::string trajectory;

    /// Config with defaults filled in and without the output entries.
    nlohmann::json canonical;
    std::string hash;
};

/// Throws ConfigError on unknown keys, wrong types or out-of-range values.
RunConfig parse_config(const nlohmann::json& document);
RunConfig load_config(const std::string& path);

/// Lowercase hex SHA-256.
std::string sha256_hex(const std::string& text);

}  // namespace nodal
