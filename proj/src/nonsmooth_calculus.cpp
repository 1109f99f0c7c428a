#include "nodal/nonsmooth_calculus.hpp"

#include "nodal/box_qp.hpp"
#include "nodal/cone_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

namespace nodal {

EnergyProblem::EnergyProblem(SpacePtr s, PiecewisePotential p, double lam)
    : space(std::move(s)), potential(std::move(p)), lambda(lam) {
    if (!space) {
        throw std::invalid_argument("energy problem needs a space");
    }
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw std::invalid_argument("lambda must be positive");
    }
}

Field SubdifferentialBox::element(const Eigen::VectorXd& w) const {
    return base - lambda * weights.cwiseProduct(w);
}

std::vector<Eigen::Index> SubdifferentialBox::free_nodes() const {
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
        if (lo[i] < hi[i]) {
            free.push_back(i);
        }
    }
    return free;
}

Eigen::VectorXd SubdifferentialBox::clamp(const Eigen::VectorXd& w) const { return w.cwiseMax(lo).cwiseMin(hi); }

double energy(const EnergyProblem& prob, const Field& u) {
    const DiscreteSpace& s = prob.grid();
    s.check_shape(u);
    double potential = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        potential += s.mass()[i] * eval_j(prob.potential, s.point(i), u[i]);
    }
    return 0.5 * s.h1_inner(u, u) - prob.lambda * potential;
}

double energy_difference(const EnergyProblem& prob, const Field& u, const Field& w) {
    const DiscreteSpace& s = prob.grid();
    s.check_shape(u);
    s.check_shape(w);
    double potential = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        potential += s.mass()[i] * eval_j_difference(prob.potential, s.point(i), u[i], w[i]);
    }
    const Field step = w - u;
    return 0.5 * step.dot(s.apply_stiffness(w + u)) - prob.lambda * potential;
}

SubdifferentialBox subdifferential_box(const EnergyProblem& prob, const Field& u) {
    const DiscreteSpace& s = prob.grid();
    SubdifferentialBox box;
    box.base = s.apply_stiffness(u);
    box.lo.resize(u.size());
    box.hi.resize(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        const ClarkeInterval iv = clarke_interval(prob.potential, s.point(i), u[i]);
        box.lo[i] = iv.lo;
        box.hi[i] = iv.hi;
    }
    box.lambda = prob.lambda;
    box.weights = s.mass();
    return box;
}

namespace {

// Dual vectors whose box coordinates are the free nodes: column i is −λ M_ii e_i.
struct FreeBlock {
    std::vector<Eigen::Index> nodes;
    Field fixed_part;
    Eigen::VectorXd lo, hi, start;
};

FreeBlock split_box(const SubdifferentialBox& box) {
    FreeBlock block;
    block.nodes = box.free_nodes();
    Eigen::VectorXd w = box.lo;
    for (Eigen::Index i : block.nodes) {
        w[i] = 0.0;
    }
    block.fixed_part = box.element(w);
    const auto k = static_cast<Eigen::Index>(block.nodes.size());
    block.lo.resize(k);
    block.hi.resize(k);
    block.start.resize(k);
    for (Eigen::Index c = 0; c < k; ++c) {
        const Eigen::Index i = block.nodes[static_cast<std::size_t>(c)];
        block.lo[c] = box.lo[i];
        block.hi[c] = box.hi[i];
        // The selection that cancels the dual vector at this node, clamped.
        block.start[c] =
            std::clamp(block.fixed_part[i] / (box.lambda * box.weights[i]), block.lo[c], block.hi[c]);
    }
    return block;
}

// Minimizes ‖g0 + C z‖²_* over lo ≤ z ≤ hi for the given dual columns.
BoxQPResult minimize_dual_norm(const DiscreteSpace& space, const Field& g0, const std::vector<Field>& columns,
                               const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, const Eigen::VectorXd& start) {
    const auto k = static_cast<Eigen::Index>(columns.size());
    Eigen::MatrixXd riesz_columns(space.size(), k);
    Eigen::MatrixXd dual_columns(space.size(), k);
    for (Eigen::Index c = 0; c < k; ++c) {
        dual_columns.col(c) = columns[static_cast<std::size_t>(c)];
        riesz_columns.col(c) = space.riesz(columns[static_cast<std::size_t>(c)]);
    }
    Eigen::MatrixXd hessian = 2.0 * dual_columns.transpose() * riesz_columns;
    hessian = 0.5 * (hessian + hessian.transpose()).eval();
    const Eigen::VectorXd linear = 2.0 * riesz_columns.transpose() * g0;
    return solve_box_qp(hessian, linear, lo, hi, start);
}

}  // namespace

SlopeResult slope(const DiscreteSpace& space, const SubdifferentialBox& box) {
    space.check_shape(box.base);
    SlopeResult result;
    const FreeBlock block = split_box(box);
    result.selection = box.lo;
    if (!block.nodes.empty()) {
        std::vector<Field> columns;
        for (Eigen::Index i : block.nodes) {
            Field col = Field::Zero(space.size());
            col[i] = -box.lambda * box.weights[i];
            columns.push_back(std::move(col));
        }
        const BoxQPResult qp = minimize_dual_norm(space, block.fixed_part, columns, block.lo, block.hi, block.start);
        for (std::size_t c = 0; c < block.nodes.size(); ++c) {
            result.selection[block.nodes[c]] = qp.x[static_cast<Eigen::Index>(c)];
        }
        result.iterations = qp.iterations;
        result.converged = qp.converged;
        result.gradient_mapping = qp.gradient_mapping;
    }
    result.certificate = box.element(result.selection);
    result.riesz = space.riesz(result.certificate);
    result.value = std::sqrt(std::max(0.0, result.certificate.dot(result.riesz)));
    return result;
}

SlopeResult slope(const EnergyProblem& prob, const Field& u) {
    return slope(prob.grid(), subdifferential_box(prob, u));
}

namespace {

/// Residual operator R = I − E_F A_FF⁻¹ E_Fᵀ A of the face F on which Π_{±P}(y)
/// is supported; R·y = y − Π_{±P}(y) for every y sharing that face.
struct FaceResidual {
    std::vector<Eigen::Index> face;
    Eigen::MatrixXd matrix;
};

FaceResidual face_residual(const Eigen::MatrixXd& A, const Field& projection) {
    FaceResidual out;
    for (Eigen::Index i = 0; i < projection.size(); ++i) {
        if (projection[i] != 0.0) {
            out.face.push_back(i);
        }
    }
    const auto n = projection.size();
    const auto k = static_cast<Eigen::Index>(out.face.size());
    out.matrix = Eigen::MatrixXd::Identity(n, n);
    if (k == 0) {
        return out;
    }
    Eigen::MatrixXd aff(k, k);
    Eigen::MatrixXd rows(k, n);
    for (Eigen::Index a = 0; a < k; ++a) {
        rows.row(a) = A.row(out.face[a]);
        for (Eigen::Index b = 0; b < k; ++b) {
            aff(a, b) = A(out.face[a], out.face[b]);
        }
    }
    const Eigen::MatrixXd solved = aff.llt().solve(rows);
    for (Eigen::Index a = 0; a < k; ++a) {
        out.matrix.row(out.face[a]) -= solved.row(a);
    }
    return out;
}

/// Projection onto D⁺(μ) ∩ D⁻(μ) when both constraints are active: Newton on
/// the multipliers (α, β) of (I + αR_F + βR_G)y = x, ‖R_F y‖² = ‖R_G y‖² = μ²,
/// re-identifying the faces F, G after every step.
std::optional<Field> project_both_active(const DiscreteSpace& space, const Field& x, double mu, double alpha,
                                         double beta) {
    const Eigen::MatrixXd A(space.stiffness());
    const auto n = x.size();
    const double target = mu * mu;
    Field y = x;
    const auto solve_inner = [&](double a, double b, Field& yy, FaceResidual& rf, FaceResidual& rg) {
        for (int it = 0; it < 60; ++it) {
            rf = face_residual(A, project_cone(space, yy, Sign::Plus).projection);
            rg = face_residual(A, project_cone(space, yy, Sign::Minus).projection);
            const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n) + a * rf.matrix + b * rg.matrix;
            const Field next = M.partialPivLu().solve(x);
            const bool same = face_residual(A, project_cone(space, next, Sign::Plus).projection).face == rf.face &&
                              face_residual(A, project_cone(space, next, Sign::Minus).projection).face == rg.face;
            yy = next;
            if (same) {
                return true;
            }
        }
        return false;
    };
    const auto residual = [&](const Field& yy, const FaceResidual& rf, const FaceResidual& rg) {
        const Field ry = rf.matrix * yy;
        const Field gy = rg.matrix * yy;
        return Eigen::Vector2d(ry.dot(A * ry) - target, gy.dot(A * gy) - target);
    };
    FaceResidual rf;
    FaceResidual rg;
    if (!solve_inner(alpha, beta, y, rf, rg)) {
        return std::nullopt;
    }
    Eigen::Vector2d c = residual(y, rf, rg);
    for (int it = 0; it < 100; ++it) {
        if (c.cwiseAbs().maxCoeff() <= 1e-13 * (1.0 + target)) {
            return y;
        }
        const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n) + alpha * rf.matrix + beta * rg.matrix;
        const auto lu = M.partialPivLu();
        const Field ry = rf.matrix * y;
        const Field gy = rg.matrix * y;
        const Field ya = -lu.solve(ry);
        const Field yb = -lu.solve(gy);
        Eigen::Matrix2d J;
        J << 2.0 * ry.dot(A * ya), 2.0 * ry.dot(A * yb), 2.0 * gy.dot(A * ya), 2.0 * gy.dot(A * yb);
        const Eigen::Vector2d step = J.fullPivLu().solve(c);
        if (!step.allFinite()) {
            return std::nullopt;
        }
        bool moved = false;
        for (double scale = 1.0; scale > 1e-12; scale *= 0.5) {
            const double a = alpha - scale * step[0];
            const double b = beta - scale * step[1];
            if (a < 0.0 || b < 0.0) {
                continue;
            }
            Field trial = y;
            FaceResidual tf;
            FaceResidual tg;
            if (!solve_inner(a, b, trial, tf, tg)) {
                continue;
            }
            const Eigen::Vector2d tc = residual(trial, tf, tg);
            if (tc.norm() < c.norm()) {
                alpha = a;
                beta = b;
                y = std::move(trial);
                rf = std::move(tf);
                rg = std::move(tg);
                c = tc;
                moved = true;
                break;
            }
        }
        if (!moved) {
            break;
        }
    }
    if (c.cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + target)) {
        return y;
    }
    return std::nullopt;
}

}  // namespace

Field project_onto(const DiscreteSpace& space, const Field& u, const ConeSet& set) {
    const auto single = [&](const Field& x, Sign sign) -> Field {
        const ProjectionResult pr = project_cone(space, x, sign);
        if (pr.distance <= set.mu) {
            return x;
        }
        return pr.projection + (set.mu / pr.distance) * pr.residual;
    };
    switch (set.kind) {
        case SetKind::Whole:
            return u;
        case SetKind::Plus:
            return single(u, Sign::Plus);
        case SetKind::Minus:
            return single(u, Sign::Minus);
        case SetKind::Both:
            break;
    }
    const ProjectionResult to_plus = project_cone(space, u, Sign::Plus);
    const ProjectionResult to_minus = project_cone(space, u, Sign::Minus);
    if (to_plus.distance <= set.mu && to_minus.distance <= set.mu) {
        return u;
    }
    // One active constraint: the single projection already lies in the other set.
    const double slack = 1e-12 * (1.0 + set.mu);
    const Field y_plus = single(u, Sign::Plus);
    if (project_cone(space, y_plus, Sign::Minus).distance <= set.mu + slack) {
        return y_plus;
    }
    const Field y_minus = single(u, Sign::Minus);
    if (project_cone(space, y_minus, Sign::Plus).distance <= set.mu + slack) {
        return y_minus;
    }
    if (set.mu > 0.0) {
        const double alpha = std::max(to_plus.distance / set.mu - 1.0, 1e-3);
        const double beta = std::max(to_minus.distance / set.mu - 1.0, 1e-3);
        if (auto y = project_both_active(space, u, set.mu, alpha, beta)) {
            return *y;
        }
    }
    // Fallback: Dykstra's alternating projections.
    Field x = u;
    Field p = space.zeros();
    Field q = space.zeros();
    for (int it = 0; it < 20000; ++it) {
        const Field y = single(x + p, Sign::Plus);
        p = x + p - y;
        const Field next = single(y + q, Sign::Minus);
        q = y + q - next;
        const double change = space.h1_norm(next - x);
        const double split = space.h1_norm(next - y);
        // The iterates lie in the bounded set, so this scale ignores how far u was.
        const double scale = 1.0 + space.h1_norm(next);
        x = next;
        if (change <= 1e-14 * scale && split <= 1e-12 * scale) {
            break;
        }
    }
    return x;
}

bool contains(const DiscreteSpace& space, const Field& u, const ConeSet& set, double tol) {
    switch (set.kind) {
        case SetKind::Whole:
            return true;
        case SetKind::Plus:
            return project_cone(space, u, Sign::Plus).distance <= set.mu + tol;
        case SetKind::Minus:
            return project_cone(space, u, Sign::Minus).distance <= set.mu + tol;
        case SetKind::Both: {
            const auto [dp, dm] = dist_to_cones(space, u);
            return dp <= set.mu + tol && dm <= set.mu + tol;
        }
    }
    return false;
}

DirectionalSup directional_sup(const DiscreteSpace& space, const Field& u, const ConeSet& set, const Field& g) {
    DirectionalSup out;
    out.direction = space.zeros();
    const Field v = space.riesz(g);
    const double nv = std::sqrt(std::max(0.0, g.dot(v)));
    if (nv == 0.0) {
        return out;
    }
    if (set.kind == SetKind::Whole) {
        out.direction = v / nv;
        out.value = nv;
        return out;
    }

    // Maximizer of ⟨g,d⟩ − ‖d‖²/(2t) over K = u − D is Π_K(t v); bisect t
    // until the ball constraint ‖d‖ ≤ 1 becomes active.
    const auto project_k = [&](double t) -> Field { return u - project_onto(space, u - t * v, set); };
    double t_lo = 1.0 / nv;
    Field d_lo = project_k(t_lo);
    if (space.h1_norm(d_lo) == 0.0) {
        return out;
    }
    // When K is bounded the ball may never become active; beyond this t the
    // value is within diam(K)²/(2t) of its limit.
    const double t_cap = 1e7 * (1.0 + space.h1_norm(u)) / nv;
    double t_hi = t_lo;
    bool bracketed = false;
    for (int k = 0; k < 80 && t_hi < t_cap; ++k) {
        t_hi *= 2.0;
        const Field d = project_k(t_hi);
        if (space.h1_norm(d) >= 1.0) {
            bracketed = true;
            break;
        }
        t_lo = t_hi;
        d_lo = d;
    }
    if (bracketed) {
        for (int k = 0; k < 200 && t_hi > t_lo * (1.0 + 1e-15); ++k) {
            const double mid = std::sqrt(t_lo * t_hi);
            if (!(mid > t_lo && mid < t_hi)) {
                break;
            }
            const Field d = project_k(mid);
            if (space.h1_norm(d) <= 1.0) {
                t_lo = mid;
                d_lo = d;
            } else {
                t_hi = mid;
            }
        }
    }
    out.direction = d_lo;
    out.value = std::max(0.0, g.dot(d_lo));
    return out;
}

std::vector<Field> active_normals(const DiscreteSpace& space, const Field& u, const ConeSet& set,
                                  double active_tol) {
    std::vector<Field> normals;
    const auto add = [&](Sign sign) {
        const ProjectionResult pr = project_cone(space, u, sign);
        if (pr.distance > 0.0 && pr.distance >= set.mu - active_tol) {
            normals.push_back(space.apply_stiffness(pr.residual / pr.distance));
        }
    };
    if (set.kind == SetKind::Plus || set.kind == SetKind::Both) {
        add(Sign::Plus);
    }
    if (set.kind == SetKind::Minus || set.kind == SetKind::Both) {
        add(Sign::Minus);
    }
    return normals;
}

NormalConeResult normal_cone_distance(const DiscreteSpace& space, const SubdifferentialBox& box, const Field& u,
                                      const ConeSet& set) {
    NormalConeResult out;
    const FreeBlock block = split_box(box);
    const std::vector<Field> normals = active_normals(space, u, set);
    out.active_constraints = static_cast<int>(normals.size());

    std::vector<Field> columns;
    for (Eigen::Index i : block.nodes) {
        Field col = Field::Zero(space.size());
        col[i] = -box.lambda * box.weights[i];
        columns.push_back(std::move(col));
    }
    columns.insert(columns.end(), normals.begin(), normals.end());
    const auto k = static_cast<Eigen::Index>(columns.size());
    if (k == 0) {
        out.distance = space.dual_norm(block.fixed_part);
        return out;
    }
    const auto nf = static_cast<Eigen::Index>(block.nodes.size());
    Eigen::VectorXd lo(k), hi(k), start(k);
    lo.head(nf) = block.lo;
    hi.head(nf) = block.hi;
    start.head(nf) = block.start;
    lo.tail(k - nf).setZero();
    hi.tail(k - nf).setConstant(std::numeric_limits<double>::infinity());
    start.tail(k - nf).setZero();

    const BoxQPResult qp = minimize_dual_norm(space, block.fixed_part, columns, lo, hi, start);
    Field g = block.fixed_part;
    for (Eigen::Index c = 0; c < k; ++c) {
        g += qp.x[c] * columns[static_cast<std::size_t>(c)];
    }
    out.distance = space.dual_norm(g);
    out.converged = qp.converged;
    return out;
}

SetSlopeResult slope_on_set(const DiscreteSpace& space, const SubdifferentialBox& box, const Field& u,
                            const ConeSet& set, const SetSlopeOptions& options) {
    space.check_shape(u);
    if (!contains(space, u, set, 1e-7)) {
        throw std::invalid_argument("slope_on_set: u is not in D");
    }
    SetSlopeResult out;
    const SlopeResult unconstrained = slope(space, box);
    out.selection = unconstrained.selection;

    const auto lower_bound = [&](const Field& d) {
        double value = box.base.dot(d);
        for (Eigen::Index i = 0; i < d.size(); ++i) {
            value -= box.lambda * box.weights[i] * std::max(box.lo[i] * d[i], box.hi[i] * d[i]);
        }
        return value;
    };

    DirectionalSup current = directional_sup(space, u, set, box.element(out.selection));
    out.value = current.value;
    out.direction = current.direction;
    out.lower = std::max(0.0, lower_bound(current.direction));

    const std::vector<Eigen::Index> free = box.free_nodes();
    double step = 1.0;
    int it = 0;
    for (; it < options.max_iterations && !free.empty(); ++it) {
        if (out.value - out.lower <= options.gap_tol * (1.0 + out.value)) {
            break;
        }
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(u.size());
        for (Eigen::Index i : free) {
            grad[i] = -box.lambda * box.weights[i] * current.direction[i];
        }
        bool accepted = false;
        while (step > 1e-30) {
            const Eigen::VectorXd trial = box.clamp(out.selection - step * grad);
            const double moved = (trial - out.selection).squaredNorm();
            if (moved == 0.0) {
                step = 0.0;
                break;
            }
            const DirectionalSup next = directional_sup(space, u, set, box.element(trial));
            out.lower = std::max(out.lower, lower_bound(next.direction));
            if (next.value <= out.value - 1e-4 * moved / step) {
                out.selection = trial;
                current = next;
                out.value = next.value;
                out.direction = next.direction;
                step *= 2.0;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            break;
        }
    }
    out.iterations = it;
    out.lower = std::min(out.lower, out.value);
    out.gap = out.value - out.lower;
    out.converged = out.gap <= 1e-8 * (1.0 + out.value);

    const NormalConeResult nc = normal_cone_distance(space, box, u, set);
    out.normal_cone = nc.distance;
    out.stationary = out.value <= options.stationary_tol;
    out.criterion_agrees = out.stationary == (nc.distance <= options.stationary_tol);
    return out;
}

SetSlopeResult slope_on_set(const EnergyProblem& prob, const Field& u, const ConeSet& set,
                            const SetSlopeOptions& options) {
    return slope_on_set(prob.grid(), subdifferential_box(prob, u), u, set, options);
}

PSReport ps_monitor(const DiscreteSpace& space, const std::vector<HistoryEntry>& history, const PSTolerances& tol) {
    if (history.empty()) {
        throw std::invalid_argument("ps_monitor needs a nonempty history");
    }
    PSReport r;
    r.length = history.size();
    std::vector<double> weighted;
    weighted.reserve(history.size());
    for (const auto& e : history) {
        weighted.push_back((1.0 + space.h1_norm(e.u)) * e.slope);
    }
    r.slope_floor = *std::min_element(weighted.begin(), weighted.end());

    // Tail: the longest suffix on which the weighted slope is already small.
    std::size_t first = history.size() - 1;
    while (first > 0 && weighted[first - 1] <= tol.weighted_slope) {
        --first;
    }
    const HistoryEntry& last = history.back();
    r.final_weighted_slope = weighted.back();
    r.final_energy = last.energy;
    r.final_norm = space.h1_norm(last.u);

    double jmin = last.energy;
    double jmax = last.energy;
    for (std::size_t k = first; k < history.size(); ++k) {
        jmin = std::min(jmin, history[k].energy);
        jmax = std::max(jmax, history[k].energy);
        r.tail_spread = std::max(r.tail_spread, space.h1_norm(history[k].u - last.u));
    }
    r.energy_variation = jmax - jmin;

    r.slope_vanishing = r.final_weighted_slope <= tol.weighted_slope;
    r.tail_length = history.size() - first;
    r.weighted_slope_decreasing = weighted.back() <= weighted.front() + tol.weighted_slope;
    r.energy_stable = r.energy_variation <= tol.energy * (1.0 + std::abs(last.energy));
    r.cauchy = r.tail_spread <= tol.cauchy * (1.0 + r.final_norm);
    r.passed = r.slope_vanishing && r.weighted_slope_decreasing && r.energy_stable && r.cauchy;
    return r;
}

void to_json(nlohmann::json& j, const SlopeResult& r) {
    j = {{"value", r.value},
         {"iterations", r.iterations},
         {"converged", r.converged},
         {"gradient_mapping", r.gradient_mapping},
         {"certificate_max_norm", r.certificate.size() ? r.certificate.cwiseAbs().maxCoeff() : 0.0},
         {"riesz_max_norm", r.riesz.size() ? r.riesz.cwiseAbs().maxCoeff() : 0.0}};
}

void to_json(nlohmann::json& j, const SetSlopeResult& r) {
    j = {{"value", r.value},       {"lower", r.lower},
         {"gap", r.gap},           {"iterations", r.iterations},
         {"converged", r.converged}, {"normal_cone_distance", r.normal_cone},
         {"stationary", r.stationary}, {"criterion_agrees", r.criterion_agrees}};
}

void to_json(nlohmann::json& j, const PSReport& r) {
    j = {{"passed", r.passed},
         {"slope_vanishing", r.slope_vanishing},
         {"weighted_slope_decreasing", r.weighted_slope_decreasing},
         {"tail_length", r.tail_length},
         {"energy_stable", r.energy_stable},
         {"cauchy", r.cauchy},
         {"length", r.length},
         {"final_weighted_slope", r.final_weighted_slope},
         {"slope_floor_estimate", r.slope_floor},
         {"energy_variation", r.energy_variation},
         {"tail_spread", r.tail_spread},
         {"final_energy", r.final_energy},
         {"final_norm", r.final_norm}};
}

}  // namespace nodal
