#pragma once

// Independent reference computations for the tests. They use dense linear
// algebra, enumeration and ODE shooting only.

#include "nodal/nonsmooth_calculus.hpp"

#include <Eigen/Dense>

#include <vector>

namespace oracle {

using nodal::Field;

Eigen::MatrixXd dense_stiffness(const nodal::DiscreteSpace& space);

/// Generalized eigenvalues of (A, M) from a dense solver, ascending.
Eigen::VectorXd dense_eigenvalues(const nodal::DiscreteSpace& space);

/// A-metric projection onto {v ≥ 0} by enumerating all 2ⁿ free sets.
struct Projection {
    Field point;
    double distance = 0.0;
};
Projection enumerate_projection(const Eigen::MatrixXd& A, const Field& u);

/// Distance to ±P by enumeration.
double cone_distance(const Eigen::MatrixXd& A, const Field& u, int sign);

/// min over lo ≤ w ≤ hi of ‖base − λ·weights∘w‖_* on a 21-point grid per free
/// coordinate, zoomed around the best point.
double grid_slope(const Eigen::MatrixXd& A, const nodal::SubdifferentialBox& box, int rounds = 14);

/// max over feasible d of min over the box of ⟨g(w), d⟩, with d ranging over
/// {‖d‖_A ≤ 1, u − d ∈ D} on a zoomed grid in Cholesky coordinates.
double saddle_slope(const Eigen::MatrixXd& A, const nodal::SubdifferentialBox& box, const Field& u,
                    const nodal::ConeSet& set, int rounds = 12);

/// lim sup of (j(s′ + t·h) − j(s′))/t over s′ near s as t ↓ 0.
double difference_quotient(const nodal::PiecewisePotential& p, double s, double h);

/// Nodal solution of −u″ = λu³ on (0, 1) with u(0) = u(1) = 0 and one
/// interior zero, by shooting on u′(0) > 0 with RK4.
struct Shooting {
    double initial_slope = 0.0;
    double energy = 0.0;
    double interior_zero = 0.0;
    double max_abs = 0.0;
    /// RK4 solution sampled at x on a fine grid.
    double value(double x) const;
    std::vector<double> grid;
    double step = 0.0;
};
Shooting shoot_nodal(double lambda);

/// Damped Newton for Au = λM|u|^{q−2}u; returns the root.
Field damped_newton(const nodal::DiscreteSpace& space, double lambda, double q, const Field& start,
                    double tol = 1e-12, int max_iter = 200);

}  // namespace oracle
