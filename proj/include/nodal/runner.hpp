#pragma once

#include "nodal/config.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace nodal {

enum ExitCode : int {
    ExitSuccess = 0,
    ExitCheckFailed = 1,
    ExitConfigError = 2,
    ExitNoLinkingWindow = 3,
    ExitNotConverged = 4,
    ExitInvarianceViolation = 5,
};

/// Command-line values that replace entries of the config file.
struct Overrides {
    std::optional<std::string> output;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> start;
    std::optional<int> spectrum_k;
    std::optional<unsigned> workers;
};

/// Seeds are drawn from one generator seeded with the config seed, in this order.
struct SeedPlan {
    std::uint64_t mu0 = 0;
    std::uint64_t schauder = 0;
    std::uint64_t scan = 0;
    std::uint64_t slope_samples = 0;

    explicit SeedPlan(std::uint64_t seed);
};

/// Reads the config and applies overrides; seed, start and k take part in the hash.
RunConfig resolve_config(const std::string& path, const Overrides& overrides = {});

struct FlowOptions {
    bool resume = false;
    /// Stop after this many accepted steps (0 runs to termination).
    int halt_after = 0;
};

int cmd_solve(const RunConfig& config, std::ostream& console);
int cmd_flow(const RunConfig& config, const FlowOptions& options, std::ostream& console);
int cmd_verify(const RunConfig& config, std::ostream& console);
int cmd_spectrum(const RunConfig& config, std::ostream& console);

}  // namespace nodal
