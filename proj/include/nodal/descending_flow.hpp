#pragma once

#include "nodal/cone_geometry.hpp"
#include "nodal/nonsmooth_calculus.hpp"

#include <json.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace nodal {

struct FlowConfig {
    /// Level for deformation mode; unset means ϱ ≡ 1.
    std::optional<double> level;
    double eps = 0.05;
    double eps_bar = 0.1;
    /// Excision radius for ψ; an empty excised list means ψ ≡ 1.
    double delta = 0.1;
    std::vector<Field> excised;
    double dt0 = 0.01;
    double dt_min = 1e-12;
    double dt_max = 1.0;
    double tol_m = 1e-8;
    double t_max = 1e6;
    int max_steps = 100000;
    double armijo = 1e-4;
    /// μ₀ used for labels and for the step cap 1/(1+‖u‖) inside D±(μ₀).
    double mu0 = 0.5;
    bool cap_in_neighbourhoods = true;
    /// Re-lift every accepted state to the maximum of J on its sector
    /// {s·u⁺ + t·u⁻ : s, t ≥ 0}.
    bool sector_lift = false;
    /// Write a checkpoint every k accepted steps (0 disables).
    int checkpoint_every = 0;
    std::string checkpoint_path;
    std::string checkpoint_hash;
    /// Stop with Interrupted after this many accepted steps (0 disables).
    int halt_after = 0;

    void validate() const;
};

enum class Termination { SlopeBelowTol, MaxTime, MaxSteps, FieldVanished, StepFailure, Interrupted };

std::string to_string(Termination t);
Termination parse_termination(const std::string& text);

struct FlowState {
    double t = 0.0;
    Field u;
    double energy = 0.0;
    double slope = 0.0;
    double norm = 0.0;
    double d_plus = 0.0;
    double d_minus = 0.0;
    RegionLabel label = RegionLabel::Overlap;
    double dt = 0.0;
    /// ϱ(u)·ψ(u) at this state.
    double cutoff = 1.0;
};

struct ExcisionEvent {
    std::size_t state = 0;
    std::size_t point = 0;
    bool entered = true;
};

struct Trajectory {
    std::vector<FlowState> states;
    Termination termination = Termination::MaxSteps;
    std::vector<ExcisionEvent> excision_log;
    int rejected_steps = 0;

    const FlowState& back() const { return states.back(); }
    std::vector<RegionLabel> labels() const;
};

/// v(u) = (1+‖u‖)·min(1, 1/‖g*‖_*)·A⁻¹g* for the minimal-norm element g*.
Field pseudo_gradient(const EnergyProblem& prob, const Field& u);
Field pseudo_gradient(const DiscreteSpace& space, const SlopeResult& slope, const Field& u);

double cutoff_rho(const FlowConfig& config, double energy_value);
double cutoff_psi(const FlowConfig& config, const DiscreteSpace& space, const Field& u);

/// argmax of J over {s·u⁺ + t·u⁻ : s, t ≥ 0}; u itself when J has no
/// interior maximum on the sector.
Field sector_lift(const EnergyProblem& prob, const Field& u);

FlowState make_state(const EnergyProblem& prob, const Field& u, double t, double dt, const FlowConfig& config);

Trajectory integrate_flow(const EnergyProblem& prob, const Field& u0, const FlowConfig& config);
/// Continues a trajectory read from a checkpoint.
Trajectory resume_flow(const EnergyProblem& prob, Trajectory partial, double next_dt, const FlowConfig& config);

struct InvarianceViolation {
    std::size_t state = 0;
    std::string kind;
    double value = 0.0;
};

struct InvarianceVerdict {
    bool passed = true;
    bool stayed_plus = true;
    bool stayed_minus = true;
    bool monotone = true;
    bool gronwall = true;
    double max_cone_excess = 0.0;
    std::vector<InvarianceViolation> violations;
    std::vector<ExcisionEvent> excision_log;
};

InvarianceVerdict monitor_invariance(const Trajectory& traj, double mu0, double tol = 1e-7);

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const std::string& header_comment = {});

nlohmann::json checkpoint_json(const Trajectory& traj, double next_dt, const std::string& config_hash);
/// Returns the trajectory and the step size to continue with.
std::pair<Trajectory, double> load_checkpoint(const nlohmann::json& j);

void to_json(nlohmann::json& j, const InvarianceVerdict& v);

}  // namespace nodal
