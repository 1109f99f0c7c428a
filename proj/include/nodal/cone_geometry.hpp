#pragma once

#include "nodal/mesh_space.hpp"
#include "nodal/nonsmooth_calculus.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace nodal {

enum class Sign { Plus = 1, Minus = -1 };

inline double sign_value(Sign s) { return s == Sign::Plus ? 1.0 : -1.0; }

struct ConeNeighborhood {
    Sign sign = Sign::Plus;
    double mu = 0.5;
};

struct ProjectionResult {
    Field projection;
    Field residual;
    double distance = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
    bool converged = true;
};

/// argmin_{v ∈ ±P} ‖u − v‖ in the H¹₀ metric; a primal-dual active-set
/// iteration on the obstacle problem.
ProjectionResult project_cone(const DiscreteSpace& space, const Field& u, Sign sign = Sign::Plus);

/// (dist(u, P), dist(u, −P)).
std::pair<double, double> dist_to_cones(const DiscreteSpace& space, const Field& u);

enum class RegionLabel { PositiveRegion, NegativeRegion, SignChangingRegion, Overlap };

std::string to_string(RegionLabel label);
RegionLabel parse_region(const std::string& text);
RegionLabel classify(double d_plus, double d_minus, double mu0);
RegionLabel region_of(const DiscreteSpace& space, const Field& u, double mu0);

struct SchauderSample {
    Sign sign = Sign::Plus;
    double distance = 0.0;
    double image_distance = 0.0;
};

struct InvarianceReport {
    double mu0 = 0.0;
    double worst_ratio = 0.0;
    bool passed = false;
    double fitted_c = 0.0;
    double exponent = 4.0;
    bool inequality_holds = true;
    double worst_inequality_excess = 0.0;
    std::size_t sample_count = 0;
    /// Sample index and data behind worst_ratio.
    std::size_t witness = 0;
    SchauderSample witness_sample;
    std::vector<SchauderSample> samples;
};

struct SchauderOptions {
    double tolerance = 1e-6;
    /// Largest cone-point norm used when drawing samples.
    double amplitude = 10.0;
    /// Modes mixed into random cone points and perturbations.
    int modes = 8;
    /// Safety factor on the fitted constant.
    double c_margin = 2.0;
};

/// Draws sample_count points on ∂D^±(μ₀) (half per sign) plus the extra
/// states lying in either neighbourhood, maps each through u ↦ λA⁻¹Mw for
/// the extreme selections w, and records dist(image, ±P)/μ₀.
InvarianceReport check_schauder(const EnergyProblem& prob, double mu0, int sample_count, std::uint64_t seed,
                                const std::vector<Field>& extra = {}, const SchauderOptions& options = {},
                                double fitted_c = -1.0);

struct Mu0Selection {
    double mu0 = 0.0;
    double fitted_c = 0.0;
    double exponent = 4.0;
    std::size_t samples = 0;
};

/// Fits dist(image) ≤ d/3 + C·d^{q−1} on a distance ladder and returns half
/// the largest μ₀ < 1 with μ₀/3 + C·μ₀^{q−1} ≤ μ₀/2.
Mu0Selection select_mu0(const EnergyProblem& prob, int samples_per_level, std::uint64_t seed,
                        const SchauderOptions& options = {});

void to_json(nlohmann::json& j, const InvarianceReport& r);
void to_json(nlohmann::json& j, const Mu0Selection& r);

}  // namespace nodal
