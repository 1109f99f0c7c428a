#pragma once

#include <Eigen/Dense>

namespace nodal {

struct BoxQPResult {
    Eigen::VectorXd x;
    int iterations = 0;
    bool converged = false;
    /// ‖L·(x − Π(x − ∇f/L))‖∞ at the returned point.
    double gradient_mapping = 0.0;
};

/// Minimizes ½xᵀHx + cᵀx over lo ≤ x ≤ hi (entries may be ±inf) by
/// projected gradient with the fixed step 1/L, L = λ_max(H).
BoxQPResult solve_box_qp(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& linear,
                         const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, Eigen::VectorXd start,
                         double tolerance = 1e-10, int max_iterations = 100000);

}  // namespace nodal
