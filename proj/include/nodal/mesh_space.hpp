#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <cstddef>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace nodal {

/// Nodal values of a grid function; boundary nodes are implicit zeros.
using Field = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

struct InvalidGrid : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ShapeMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Tensor grid on an interval (dimension 1) or rectangle (dimension 2).
/// Only interior nodes carry unknowns.
struct GridSpec {
    int dimension = 1;
    std::array<double, 2> lower{0.0, 0.0};
    std::array<double, 2> upper{1.0, 1.0};
    std::array<int, 2> nodes{2, 1};

    static GridSpec interval(double a, double b, int n);
    static GridSpec rectangle(double ax, double bx, int nx, double ay, double by, int ny);

    double spacing(int axis) const { return (upper[axis] - lower[axis]) / (nodes[axis] + 1); }
    /// Nodal quadrature weight h^d.
    double cell_volume() const;
    std::size_t node_count() const;

    void validate() const;
};

/// Nodal coordinate; the second entry is unused in 1D.
using Point = std::array<double, 2>;

struct Eigenpair {
    double value;
    Field vector;
};

/// Finite-difference realization of H^1_0: stiffness A (uᵀAu ≈ ∫|∇u|²),
/// lumped mass M (uᵀMu ≈ ∫u²), a cached Cholesky factor of A for the
/// Riesz map and dual norm, and the generalized eigenpairs of Aφ = λMφ.
///
/// Immutable after construction; every member function is const and safe
/// to call from concurrent workers.
class DiscreteSpace {
public:
    explicit DiscreteSpace(const GridSpec& spec);

    const GridSpec& grid() const { return spec_; }
    Eigen::Index size() const { return static_cast<Eigen::Index>(points_.size()); }
    const std::vector<Point>& points() const { return points_; }
    const Point& point(Eigen::Index i) const { return points_[static_cast<std::size_t>(i)]; }

    const SparseMatrix& stiffness() const { return stiffness_; }
    /// Diagonal of the lumped mass operator.
    const Eigen::VectorXd& mass() const { return mass_; }

    Field apply_stiffness(const Field& u) const;
    Field apply_mass(const Field& u) const;
    /// Riesz representative A⁻¹g of a dual vector g.
    Field riesz(const Field& g) const;

    double h1_inner(const Field& u, const Field& v) const;
    double h1_norm(const Field& u) const;
    double l2_inner(const Field& u, const Field& v) const;
    /// Discrete Lᵖ norm with nodal weight h^d; p = infinity gives the max norm.
    double lp_norm(const Field& u, double p) const;
    /// Riesz dual norm √(gᵀA⁻¹g).
    double dual_norm(const Field& g) const;

    /// First k generalized eigenpairs, ascending, M-orthonormal.
    std::vector<Eigenpair> eigenpairs(int k) const;
    const Eigenpair& eigenpair(int index) const;

    void check_shape(const Field& u) const;
    Field zeros() const { return Field::Zero(size()); }

private:
    GridSpec spec_;
    std::vector<Point> points_;
    SparseMatrix stiffness_;
    Eigen::VectorXd mass_;
    Eigen::SimplicialLLT<SparseMatrix> factor_;
    std::vector<Eigenpair> spectrum_;
};

using SpacePtr = std::shared_ptr<const DiscreteSpace>;

SpacePtr build_space(const GridSpec& spec);

/// CSV with one row per interior node: coordinates then value.
void write_field_csv(std::ostream& out, const DiscreteSpace& space, const Field& u,
                     const std::string& header_comment = {});
Field read_field_csv(std::istream& in, const DiscreteSpace& space);

}  // namespace nodal
