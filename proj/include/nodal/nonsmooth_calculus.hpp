#pragma once

#include "nodal/mesh_space.hpp"
#include "nodal/potential.hpp"

#include <json.hpp>

#include <vector>

namespace nodal {

/// J_λ(u) = ½uᵀAu − λ Σ M_ii c(x_i) j(u_i) on a shared discrete space.
struct EnergyProblem {
    SpacePtr space;
    PiecewisePotential potential;
    double lambda = 1.0;

    EnergyProblem(SpacePtr s, PiecewisePotential p, double lam);
    const DiscreteSpace& grid() const { return *space; }
};

/// {Au − λMw : lo ≤ w ≤ hi}, the discrete image of {u} − λN(u).
struct SubdifferentialBox {
    Field base;
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;
    double lambda = 1.0;
    Eigen::VectorXd weights;

    Field element(const Eigen::VectorXd& w) const;
    /// Nodes with lo < hi.
    std::vector<Eigen::Index> free_nodes() const;
    Eigen::VectorXd clamp(const Eigen::VectorXd& w) const;
};

struct SlopeResult {
    double value = 0.0;
    Eigen::VectorXd selection;
    Field certificate;
    Field riesz;
    int iterations = 0;
    bool converged = true;
    double gradient_mapping = 0.0;
};

double energy(const EnergyProblem& prob, const Field& u);
/// J_λ(w) − J_λ(u) evaluated without cancellation against the size of J.
double energy_difference(const EnergyProblem& prob, const Field& u, const Field& w);
SubdifferentialBox subdifferential_box(const EnergyProblem& prob, const Field& u);
/// Minimal dual norm over the box.
SlopeResult slope(const DiscreteSpace& space, const SubdifferentialBox& box);
SlopeResult slope(const EnergyProblem& prob, const Field& u);

enum class SetKind { Whole, Plus, Minus, Both };

/// Whole space, D⁺(μ), D⁻(μ), or D⁺(μ) ∩ D⁻(μ).
struct ConeSet {
    SetKind kind = SetKind::Whole;
    double mu = 0.0;

    static ConeSet whole() { return {}; }
    static ConeSet plus(double mu) { return {SetKind::Plus, mu}; }
    static ConeSet minus(double mu) { return {SetKind::Minus, mu}; }
    static ConeSet both(double mu) { return {SetKind::Both, mu}; }
};

/// Metric projection onto the set in the A-inner product.
Field project_onto(const DiscreteSpace& space, const Field& u, const ConeSet& set);
bool contains(const DiscreteSpace& space, const Field& u, const ConeSet& set, double tol = 1e-9);

/// sup{⟨g, d⟩ : u − d ∈ D, ‖d‖ ≤ 1} and its maximizer.
struct DirectionalSup {
    double value = 0.0;
    Field direction;
};
DirectionalSup directional_sup(const DiscreteSpace& space, const Field& u, const ConeSet& set,
                               const Field& g);

/// Outward normals of the active constraints of D at u, as dual vectors.
std::vector<Field> active_normals(const DiscreteSpace& space, const Field& u, const ConeSet& set,
                                  double active_tol = 1e-7);

/// min over box selections and s ≥ 0 of ‖g(w) + Σ s_k n_k‖_*; zero exactly
/// when 0 ∈ ∂J(u) + ∂δ_D(u).
struct NormalConeResult {
    double distance = 0.0;
    int active_constraints = 0;
    bool converged = true;
};
NormalConeResult normal_cone_distance(const DiscreteSpace& space, const SubdifferentialBox& box,
                                      const Field& u, const ConeSet& set);

struct SetSlopeOptions {
    double gap_tol = 1e-11;
    int max_iterations = 3000;
    double stationary_tol = 1e-8;
};

struct SetSlopeResult {
    double value = 0.0;
    /// Certified lower bound from the last inner maximizer; value − lower is the gap.
    double lower = 0.0;
    double gap = 0.0;
    Eigen::VectorXd selection;
    Field direction;
    int iterations = 0;
    bool converged = true;
    double normal_cone = 0.0;
    bool stationary = false;
    bool criterion_agrees = true;
};

SetSlopeResult slope_on_set(const DiscreteSpace& space, const SubdifferentialBox& box, const Field& u,
                            const ConeSet& set, const SetSlopeOptions& options = {});
SetSlopeResult slope_on_set(const EnergyProblem& prob, const Field& u, const ConeSet& set,
                            const SetSlopeOptions& options = {});

struct HistoryEntry {
    Field u;
    double energy = 0.0;
    double slope = 0.0;
};

struct PSTolerances {
    double weighted_slope = 1e-6;
    double energy = 1e-8;
    double cauchy = 1e-6;
};

/// The tail is the longest suffix with (1+‖u‖)m ≤ weighted_slope; energy
/// variation and H¹ spread are measured on it.

struct PSReport {
    bool passed = false;
    bool slope_vanishing = false;
    bool energy_stable = false;
    bool cauchy = false;
    bool weighted_slope_decreasing = false;
    std::size_t length = 0;
    std::size_t tail_length = 0;
    double final_weighted_slope = 0.0;
    /// min (1+‖u‖)m over the history; an empirical stand-in for the slope floor b.
    double slope_floor = 0.0;
    double energy_variation = 0.0;
    double tail_spread = 0.0;
    double final_energy = 0.0;
    double final_norm = 0.0;
};

PSReport ps_monitor(const DiscreteSpace& space, const std::vector<HistoryEntry>& history,
                    const PSTolerances& tol = {});

void to_json(nlohmann::json& j, const SlopeResult& r);
void to_json(nlohmann::json& j, const SetSlopeResult& r);
void to_json(nlohmann::json& j, const PSReport& r);

}  // namespace nodal
