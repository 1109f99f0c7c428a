#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace oracle {

Eigen::MatrixXd dense_stiffness(const nodal::DiscreteSpace& space) { return Eigen::MatrixXd(space.stiffness()); }

Eigen::VectorXd dense_eigenvalues(const nodal::DiscreteSpace& space) {
    const Eigen::MatrixXd A = dense_stiffness(space);
    const Eigen::MatrixXd M = space.mass().asDiagonal();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(A, M);
    return solver.eigenvalues();
}

namespace {

/// All faces {p_i = 0 for i outside F} of the cone with A_FF⁻¹ precomputed.
struct Faces {
    std::vector<std::vector<int>> free;
    std::vector<Eigen::MatrixXd> inverse;

    explicit Faces(const Eigen::MatrixXd& A) {
        const auto n = static_cast<int>(A.rows());
        if (n > 16) {
            throw std::invalid_argument("enumeration is limited to 16 nodes");
        }
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
            std::vector<int> f;
            for (int i = 0; i < n; ++i) {
                if (mask & (1u << i)) {
                    f.push_back(i);
                }
            }
            const auto k = static_cast<Eigen::Index>(f.size());
            Eigen::MatrixXd Aff(k, k);
            for (Eigen::Index a = 0; a < k; ++a) {
                for (Eigen::Index b = 0; b < k; ++b) {
                    Aff(a, b) = A(f[a], f[b]);
                }
            }
            free.push_back(std::move(f));
            inverse.push_back(k > 0 ? Eigen::MatrixXd(Aff.inverse()) : Aff);
        }
    }

    Projection project(const Eigen::MatrixXd& A, const Field& u) const {
        const Field Au = A * u;
        Projection best;
        best.distance = std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < free.size(); ++m) {
            const auto& f = free[m];
            const auto k = static_cast<Eigen::Index>(f.size());
            Eigen::VectorXd rhs(k);
            for (Eigen::Index a = 0; a < k; ++a) {
                rhs[a] = Au[f[a]];
            }
            const Eigen::VectorXd pf = inverse[m] * rhs;
            if ((pf.array() < 0.0).any()) {
                continue;
            }
            Field p = Field::Zero(u.size());
            for (Eigen::Index a = 0; a < k; ++a) {
                p[f[a]] = pf[a];
            }
            const Field r = u - p;
            const double d = std::sqrt(std::max(0.0, r.dot(A * r)));
            if (d < best.distance) {
                best.distance = d;
                best.point = p;
            }
        }
        return best;
    }
};

}  // namespace

Projection enumerate_projection(const Eigen::MatrixXd& A, const Field& u) { return Faces(A).project(A, u); }

double cone_distance(const Eigen::MatrixXd& A, const Field& u, int sign) {
    return enumerate_projection(A, sign > 0 ? Field(u) : Field(-u)).distance;
}

namespace {

/// Odometer over a grid of `points` values per coordinate.
bool advance(std::vector<int>& index, int points) {
    for (auto& i : index) {
        if (++i < points) {
            return true;
        }
        i = 0;
    }
    return false;
}

}  // namespace

double grid_slope(const Eigen::MatrixXd& A, const nodal::SubdifferentialBox& box, int rounds) {
    const Eigen::MatrixXd Ainv = A.inverse();
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < box.lo.size(); ++i) {
        if (box.lo[i] < box.hi[i]) {
            free.push_back(i);
        }
    }
    const auto value = [&](const Eigen::VectorXd& w) {
        const Eigen::VectorXd g = box.base - box.lambda * box.weights.cwiseProduct(w);
        return std::sqrt(std::max(0.0, g.dot(Ainv * g)));
    };
    Eigen::VectorXd w = box.lo;
    if (free.empty()) {
        return value(w);
    }
    constexpr int points = 21;
    std::vector<double> a(free.size());
    std::vector<double> b(free.size());
    for (std::size_t k = 0; k < free.size(); ++k) {
        a[k] = box.lo[free[k]];
        b[k] = box.hi[free[k]];
    }
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_w = w;
    for (int round = 0; round < rounds; ++round) {
        std::vector<int> index(free.size(), 0);
        do {
            for (std::size_t k = 0; k < free.size(); ++k) {
                w[free[k]] = a[k] + (b[k] - a[k]) * index[k] / (points - 1);
            }
            const double v = value(w);
            if (v < best) {
                best = v;
                best_w = w;
            }
        } while (advance(index, points));
        for (std::size_t k = 0; k < free.size(); ++k) {
            const double cell = (b[k] - a[k]) / (points - 1);
            a[k] = std::max(box.lo[free[k]], best_w[free[k]] - 2.0 * cell);
            b[k] = std::min(box.hi[free[k]], best_w[free[k]] + 2.0 * cell);
        }
    }
    return best;
}

double saddle_slope(const Eigen::MatrixXd& A, const nodal::SubdifferentialBox& box, const Field& u,
                    const nodal::ConeSet& set, int rounds) {
    const auto n = static_cast<int>(u.size());
    // d = L⁻ᵀz gives dᵀAd = zᵀz.
    const Eigen::MatrixXd L = A.llt().matrixL();
    const Eigen::MatrixXd Linv_t = L.transpose().inverse();
    const Field Au = A * u;
    const auto phi = [&](const Field& d) {
        double v = Au.dot(d);
        for (int i = 0; i < n; ++i) {
            v -= box.lambda * box.weights[i] * std::max(box.lo[i] * d[i], box.hi[i] * d[i]);
        }
        return v;
    };
    const double slack = 1e-12 * (1.0 + set.mu);
    const Faces faces(A);
    const auto dist = [&](const Field& y, int sign) {
        return faces.project(A, sign > 0 ? Field(y) : Field(-y)).distance;
    };
    // max over the constrained signs of dist(u − d, ±P) − μ; convex along rays.
    const auto excess = [&](const Field& d) {
        const Field y = u - d;
        switch (set.kind) {
            case nodal::SetKind::Whole:
                return -1.0;
            case nodal::SetKind::Plus:
                return dist(y, 1) - set.mu - slack;
            case nodal::SetKind::Minus:
                return dist(y, -1) - set.mu - slack;
            case nodal::SetKind::Both:
                return std::max(dist(y, 1), dist(y, -1)) - set.mu - slack;
        }
        return 1.0;
    };
    constexpr int points = 21;
    std::vector<double> a(n, -1.0);
    std::vector<double> b(n, 1.0);
    double best = 0.0;  // d = 0 is always feasible
    Eigen::VectorXd best_z = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd z(n);
    // φ is positively homogeneous and the feasible set is convex with 0
    // inside, so each grid ray is searched out to its boundary; v/‖z‖ bounds
    // the ray and rays are visited best bound first.
    struct Ray {
        double bound;
        Eigen::VectorXd z;
        double v;
    };
    for (int round = 0; round < rounds; ++round) {
        std::vector<Ray> rays;
        std::vector<int> index(n, 0);
        do {
            for (int k = 0; k < n; ++k) {
                z[k] = a[k] + (b[k] - a[k]) * index[k] / (points - 1);
            }
            const double norm = z.norm();
            if (norm == 0.0) {
                continue;
            }
            const double v = phi(Linv_t * z);
            if (v > 0.0 && v / norm > best) {
                rays.push_back({v / norm, z, v});
            }
        } while (advance(index, points));
        std::sort(rays.begin(), rays.end(), [](const Ray& x, const Ray& y) { return x.bound > y.bound; });
        for (const Ray& ray : rays) {
            if (ray.bound <= best) {
                break;
            }
            const Field d = Linv_t * ray.z;
            // Illinois regula falsi for the last feasible point on the ray.
            double lo = 0.0;
            double hi = 1.0 / ray.z.norm();
            double f_lo = excess(lo * d);
            double f_hi = excess(hi * d);
            if (f_hi <= 0.0) {
                lo = hi;
            } else if (f_lo < 0.0) {
                const double resolution = 1e-10 * std::max(1.0, best);
                int side = 0;
                for (int it = 0; it < 200 && (hi - lo) * ray.v > resolution && hi * ray.v > best; ++it) {
                    // Every third step bisects so that the bracket always shrinks.
                    double c = it % 3 == 2 ? 0.5 * (lo + hi) : hi - f_hi * (hi - lo) / (f_hi - f_lo);
                    if (!(c > lo && c < hi)) {
                        c = 0.5 * (lo + hi);
                    }
                    const double fc = excess(c * d);
                    if (fc <= 0.0) {
                        lo = c;
                        f_lo = fc;
                        if (side == -1) {
                            f_hi *= 0.5;
                        }
                        side = -1;
                    } else {
                        hi = c;
                        f_hi = fc;
                        if (side == 1) {
                            f_lo *= 0.5;
                        }
                        side = 1;
                    }
                }
            }
            if (lo * ray.v > best) {
                best = lo * ray.v;
                best_z = lo * ray.z;
            }
        }
        for (int k = 0; k < n; ++k) {
            const double cell = (b[k] - a[k]) / (points - 1);
            a[k] = std::max(-1.0, best_z[k] - 2.0 * cell);
            b[k] = std::min(1.0, best_z[k] + 2.0 * cell);
        }
    }
    return best;
}

double difference_quotient(const nodal::PiecewisePotential& p, double s, double h) {
    // The window for s′ shrinks with t so that curvature does not bias the
    // limit, and spans 2|h|t so both sides of a kink are reached.
    constexpr double t = 1e-6;
    const double step = 0.1 * t * std::max(1.0, std::abs(h));
    double result = -std::numeric_limits<double>::infinity();
    for (int k = -20; k <= 20; ++k) {
        const double sp = s + step * k;
        result = std::max(result, (p.value(sp + t * h) - p.value(sp)) / t);
    }
    return result;
}

namespace {

struct OdeState {
    double u;
    double v;
    double kinetic;
    double quartic;
};

OdeState rhs(const OdeState& y, double lambda) {
    return {y.v, -lambda * y.u * y.u * y.u, y.v * y.v, y.u * y.u * y.u * y.u};
}

OdeState axpy(const OdeState& y, double h, const OdeState& k) {
    return {y.u + h * k.u, y.v + h * k.v, y.kinetic + h * k.kinetic, y.quartic + h * k.quartic};
}

OdeState rk4(const OdeState& y, double h, double lambda) {
    const OdeState k1 = rhs(y, lambda);
    const OdeState k2 = rhs(axpy(y, h / 2, k1), lambda);
    const OdeState k3 = rhs(axpy(y, h / 2, k2), lambda);
    const OdeState k4 = rhs(axpy(y, h, k3), lambda);
    return {y.u + h / 6 * (k1.u + 2 * k2.u + 2 * k3.u + k4.u), y.v + h / 6 * (k1.v + 2 * k2.v + 2 * k3.v + k4.v),
            y.kinetic + h / 6 * (k1.kinetic + 2 * k2.kinetic + 2 * k3.kinetic + k4.kinetic),
            y.quartic + h / 6 * (k1.quartic + 2 * k2.quartic + 2 * k3.quartic + k4.quartic)};
}

constexpr int kSteps = 200000;

/// Position of the second zero of the shot solution, or 2 if it is beyond x = 1.
double second_zero(double slope, double lambda) {
    const double h = 1.0 / kSteps;
    OdeState y{0.0, slope, 0.0, 0.0};
    int zeros = 0;
    for (int i = 0; i < kSteps + kSteps / 50; ++i) {
        const OdeState next = rk4(y, h, lambda);
        if (y.u != 0.0 && next.u * y.u <= 0.0 && next.u != y.u) {
            if (++zeros == 2) {
                return (i + y.u / (y.u - next.u)) * h;
            }
        }
        y = next;
    }
    return 2.0;
}

}  // namespace

Shooting shoot_nodal(double lambda) {
    // The second zero moves left as the initial slope grows.
    double lo = 1.0;
    double hi = 1.0;
    while (second_zero(lo, lambda) < 1.0) {
        lo /= 2.0;
    }
    while (second_zero(hi, lambda) > 1.0) {
        hi *= 2.0;
    }
    for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (second_zero(mid, lambda) > 1.0 ? lo : hi) = mid;
    }
    Shooting s;
    s.initial_slope = 0.5 * (lo + hi);
    s.step = 1.0 / kSteps;
    OdeState y{0.0, s.initial_slope, 0.0, 0.0};
    s.grid.push_back(0.0);
    for (int i = 0; i < kSteps; ++i) {
        const OdeState next = rk4(y, s.step, lambda);
        if (y.u > 0.0 && next.u <= 0.0) {
            s.interior_zero = (i + y.u / (y.u - next.u)) * s.step;
        }
        y = next;
        s.grid.push_back(y.u);
        s.max_abs = std::max(s.max_abs, std::abs(y.u));
    }
    s.energy = 0.5 * y.kinetic - 0.25 * lambda * y.quartic;
    return s;
}

double Shooting::value(double x) const {
    const double pos = x / step;
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(pos), grid.size() - 2);
    const double f = pos - static_cast<double>(i);
    return (1.0 - f) * grid[i] + f * grid[i + 1];
}

Field damped_newton(const nodal::DiscreteSpace& space, double lambda, double q, const Field& start, double tol,
                    int max_iter) {
    const Eigen::MatrixXd A = dense_stiffness(space);
    const Eigen::VectorXd m = space.mass();
    const Eigen::MatrixXd Ainv = A.inverse();
    const auto residual = [&](const Field& u) {
        const Eigen::VectorXd ju = u.array().abs().pow(q - 2.0) * u.array();
        return Eigen::VectorXd(A * u - lambda * m.cwiseProduct(ju));
    };
    const auto dual = [&](const Eigen::VectorXd& g) { return std::sqrt(std::max(0.0, g.dot(Ainv * g))); };
    Field u = start;
    Eigen::VectorXd r = residual(u);
    for (int it = 0; it < max_iter && dual(r) > tol; ++it) {
        const Eigen::VectorXd d2 = (q - 1.0) * u.array().abs().pow(q - 2.0);
        const Eigen::MatrixXd J = A - lambda * Eigen::MatrixXd(m.cwiseProduct(d2).asDiagonal());
        const Field step = J.fullPivLu().solve(r);
        double t = 1.0;
        const double r0 = dual(r);
        while (t > 1e-12) {
            const Field trial = u - t * step;
            const Eigen::VectorXd rt = residual(trial);
            if (dual(rt) < (1.0 - 1e-4 * t) * r0) {
                u = trial;
                r = rt;
                break;
            }
            t /= 2.0;
        }
        if (t <= 1e-12) {
            break;
        }
    }
    return u;
}

}  // namespace oracle
