#include "nodal/box_qp.hpp"

#include <cmath>

namespace nodal {

BoxQPResult solve_box_qp(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& linear,
                         const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, Eigen::VectorXd start,
                         double tolerance, int max_iterations) {
    BoxQPResult result;
    const auto project = [&](const Eigen::VectorXd& x) { return x.cwiseMax(lo).cwiseMin(hi); };
    result.x = project(start);
    if (result.x.size() == 0) {
        result.converged = true;
        return result;
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hessian, Eigen::EigenvaluesOnly);
    const double lipschitz = eig.eigenvalues().maxCoeff();
    if (!(lipschitz > 0.0)) {
        // f is affine on the box: any point satisfies the stationarity test only if c vanishes.
        result.gradient_mapping = linear.cwiseAbs().maxCoeff();
        result.converged = result.gradient_mapping <= tolerance;
        return result;
    }
    const double step = 1.0 / lipschitz;

    for (result.iterations = 0; result.iterations < max_iterations; ++result.iterations) {
        const Eigen::VectorXd grad = hessian * result.x + linear;
        const Eigen::VectorXd next = project(result.x - step * grad);
        result.gradient_mapping = lipschitz * (next - result.x).cwiseAbs().maxCoeff();
        if (result.gradient_mapping <= tolerance) {
            result.converged = true;
            return result;
        }
        result.x = next;
    }
    const Eigen::VectorXd grad = hessian * result.x + linear;
    result.gradient_mapping = lipschitz * (project(result.x - step * grad) - result.x).cwiseAbs().maxCoeff();
    result.converged = result.gradient_mapping <= tolerance;
    return result;
}

}  // namespace nodal
