#include "nodal/mesh_space.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace nodal {

GridSpec GridSpec::interval(double a, double b, int n) {
    GridSpec s;
    s.dimension = 1;
    s.lower = {a, 0.0};
    s.upper = {b, 1.0};
    s.nodes = {n, 1};
    s.validate();
    return s;
}

GridSpec GridSpec::rectangle(double ax, double bx, int nx, double ay, double by, int ny) {
    GridSpec s;
    s.dimension = 2;
    s.lower = {ax, ay};
    s.upper = {bx, by};
    s.nodes = {nx, ny};
    s.validate();
    return s;
}

double GridSpec::cell_volume() const {
    return dimension == 1 ? spacing(0) : spacing(0) * spacing(1);
}

std::size_t GridSpec::node_count() const {
    return dimension == 1 ? static_cast<std::size_t>(nodes[0])
                          : static_cast<std::size_t>(nodes[0]) * static_cast<std::size_t>(nodes[1]);
}

void GridSpec::validate() const {
    if (dimension != 1 && dimension != 2) {
        throw InvalidGrid("grid dimension must be 1 or 2");
    }
    for (int axis = 0; axis < dimension; ++axis) {
        if (nodes[axis] < 2) {
            throw InvalidGrid("grid needs at least 2 interior nodes per axis");
        }
        if (!(lower[axis] < upper[axis]) || !std::isfinite(lower[axis]) || !std::isfinite(upper[axis])) {
            throw InvalidGrid("grid bounds must be finite and strictly ordered");
        }
    }
}

namespace {

void add_tridiagonal(std::vector<Eigen::Triplet<double>>& triplets, int n, int stride, int offset,
                     int outer_stride, int outer_count, double scale) {
    for (int k = 0; k < outer_count; ++k) {
        for (int i = 0; i < n; ++i) {
            const int row = offset + k * outer_stride + i * stride;
            triplets.emplace_back(row, row, 2.0 * scale);
            if (i > 0) {
                triplets.emplace_back(row, row - stride, -scale);
            }
            if (i + 1 < n) {
                triplets.emplace_back(row, row + stride, -scale);
            }
        }
    }
}

// Deterministic sign: φ₁ nonnegative, others with a positive leading entry.
void fix_sign(Field& v, bool first) {
    if (first) {
        if (v.sum() < 0.0) {
            v = -v;
        }
        return;
    }
    const double threshold = 1e-8 * v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v[i]) > threshold) {
            if (v[i] < 0.0) {
                v = -v;
            }
            return;
        }
    }
}

}  // namespace

DiscreteSpace::DiscreteSpace(const GridSpec& spec) : spec_(spec) {
    spec_.validate();
    const int nx = spec_.nodes[0];
    const int ny = spec_.dimension == 2 ? spec_.nodes[1] : 1;
    const int n = nx * ny;
    const double hx = spec_.spacing(0);
    const double hy = spec_.dimension == 2 ? spec_.spacing(1) : 1.0;

    points_.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const double y = spec_.dimension == 2 ? spec_.lower[1] + (j + 1) * hy : 0.0;
            points_.push_back({spec_.lower[0] + (i + 1) * hx, y});
        }
    }

    std::vector<Eigen::Triplet<double>> triplets;
    if (spec_.dimension == 1) {
        add_tridiagonal(triplets, nx, 1, 0, nx, 1, 1.0 / hx);
    } else {
        add_tridiagonal(triplets, nx, 1, 0, nx, ny, hy / hx);
        add_tridiagonal(triplets, ny, nx, 0, 1, nx, hx / hy);
    }
    stiffness_.resize(n, n);
    stiffness_.setFromTriplets(triplets.begin(), triplets.end());
    stiffness_.makeCompressed();
    mass_ = Eigen::VectorXd::Constant(n, spec_.cell_volume());

    factor_.compute(stiffness_);
    if (factor_.info() != Eigen::Success) {
        throw std::runtime_error("stiffness factorization failed");
    }

    // M is diagonal, so M^{-1/2} A M^{-1/2} is a symmetric reformulation.
    const Eigen::VectorXd inv_sqrt_mass = mass_.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd scaled = Eigen::MatrixXd(stiffness_);
    scaled = inv_sqrt_mass.asDiagonal() * scaled * inv_sqrt_mass.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(scaled);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("eigensolver did not converge");
    }
    spectrum_.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        Field v = inv_sqrt_mass.asDiagonal() * solver.eigenvectors().col(k);
        v /= std::sqrt(v.dot(mass_.asDiagonal() * v));
        fix_sign(v, k == 0);
        spectrum_.push_back({solver.eigenvalues()[k], std::move(v)});
    }
}

SpacePtr build_space(const GridSpec& spec) { return std::make_shared<const DiscreteSpace>(spec); }

void DiscreteSpace::check_shape(const Field& u) const {
    if (u.size() != size()) {
        std::ostringstream msg;
        msg << "field has " << u.size() << " entries, grid has " << size();
        throw ShapeMismatch(msg.str());
    }
}

Field DiscreteSpace::apply_stiffness(const Field& u) const {
    check_shape(u);
    return stiffness_ * u;
}

Field DiscreteSpace::apply_mass(const Field& u) const {
    check_shape(u);
    return mass_.cwiseProduct(u);
}

Field DiscreteSpace::riesz(const Field& g) const {
    check_shape(g);
    return factor_.solve(g);
}

double DiscreteSpace::h1_inner(const Field& u, const Field& v) const {
    check_shape(u);
    check_shape(v);
    return u.dot(stiffness_ * v);
}

double DiscreteSpace::h1_norm(const Field& u) const { return std::sqrt(std::max(0.0, h1_inner(u, u))); }

double DiscreteSpace::l2_inner(const Field& u, const Field& v) const {
    check_shape(u);
    check_shape(v);
    return u.dot(mass_.cwiseProduct(v));
}

double DiscreteSpace::lp_norm(const Field& u, double p) const {
    check_shape(u);
    if (std::isinf(p)) {
        return u.size() == 0 ? 0.0 : u.cwiseAbs().maxCoeff();
    }
    if (!(p >= 1.0)) {
        throw std::invalid_argument("lp_norm requires p >= 1");
    }
    double sum = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        sum += mass_[i] * std::pow(std::abs(u[i]), p);
    }
    return std::pow(sum, 1.0 / p);
}

double DiscreteSpace::dual_norm(const Field& g) const {
    return std::sqrt(std::max(0.0, g.dot(riesz(g))));
}

std::vector<Eigenpair> DiscreteSpace::eigenpairs(int k) const {
    if (k < 1 || k > size()) {
        throw std::out_of_range("eigenpair count out of range");
    }
    return {spectrum_.begin(), spectrum_.begin() + k};
}

const Eigenpair& DiscreteSpace::eigenpair(int index) const {
    if (index < 0 || index >= size()) {
        throw std::out_of_range("eigenpair index out of range");
    }
    return spectrum_[static_cast<std::size_t>(index)];
}

void write_field_csv(std::ostream& out, const DiscreteSpace& space, const Field& u,
                     const std::string& header_comment) {
    space.check_shape(u);
    if (!header_comment.empty()) {
        out << "# " << header_comment << '\n';
    }
    out << (space.grid().dimension == 1 ? "x,value\n" : "x,y,value\n");
    out << std::setprecision(17);
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        const auto& p = space.point(i);
        out << p[0] << ',';
        if (space.grid().dimension == 2) {
            out << p[1] << ',';
        }
        out << u[i] << '\n';
    }
}

Field read_field_csv(std::istream& in, const DiscreteSpace& space) {
    std::vector<double> values;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        const auto comma = line.find_last_of(',');
        if (comma == std::string::npos) {
            throw std::runtime_error("malformed field CSV row: " + line);
        }
        values.push_back(std::stod(line.substr(comma + 1)));
    }
    Field u = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    space.check_shape(u);
    return u;
}

}  // namespace nodal
