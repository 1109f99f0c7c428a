#include "nodal/cone_geometry.hpp"

#include "nodal/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace nodal {

namespace {

// Solves A_II y = rhs_I for the principal submatrix on `inactive`.
Eigen::VectorXd solve_principal(const SparseMatrix& a, const std::vector<Eigen::Index>& inactive,
                                const Eigen::VectorXd& rhs) {
    std::vector<Eigen::Index> local(static_cast<std::size_t>(a.rows()), -1);
    for (std::size_t k = 0; k < inactive.size(); ++k) {
        local[static_cast<std::size_t>(inactive[k])] = static_cast<Eigen::Index>(k);
    }
    std::vector<Eigen::Triplet<double>> triplets;
    for (Eigen::Index col = 0; col < a.outerSize(); ++col) {
        const Eigen::Index lc = local[static_cast<std::size_t>(col)];
        if (lc < 0) {
            continue;
        }
        for (SparseMatrix::InnerIterator it(a, col); it; ++it) {
            const Eigen::Index lr = local[static_cast<std::size_t>(it.row())];
            if (lr >= 0) {
                triplets.emplace_back(lr, lc, it.value());
            }
        }
    }
    const auto m = static_cast<Eigen::Index>(inactive.size());
    SparseMatrix sub(m, m);
    sub.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLDLT<SparseMatrix> solver(sub);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("cone projection: principal submatrix factorization failed");
    }
    return solver.solve(rhs);
}

}  // namespace

ProjectionResult project_cone(const DiscreteSpace& space, const Field& u, Sign sign) {
    space.check_shape(u);
    const double nu = sign_value(sign);
    const Field x = nu * u;
    const SparseMatrix& a = space.stiffness();
    const Eigen::VectorXd diag = a.diagonal();
    const Eigen::Index n = x.size();

    ProjectionResult out;
    std::vector<bool> active(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        active[static_cast<std::size_t>(i)] = x[i] < 0.0;
    }

    Field v = x;
    const int max_iterations = 500;
    out.converged = false;
    for (out.iterations = 1; out.iterations <= max_iterations; ++out.iterations) {
        std::vector<Eigen::Index> inactive;
        Field x_active = Field::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (active[static_cast<std::size_t>(i)]) {
                x_active[i] = x[i];
            } else {
                inactive.push_back(i);
            }
        }
        // On the inactive set A(v − x) = 0 with v = 0 on the active set, so
        // v_I = x_I + A_II⁻¹ (A x_A)_I.
        v.setZero();
        if (!inactive.empty()) {
            const Field ax = a * x_active;
            Eigen::VectorXd rhs(static_cast<Eigen::Index>(inactive.size()));
            for (std::size_t k = 0; k < inactive.size(); ++k) {
                rhs[static_cast<Eigen::Index>(k)] = ax[inactive[k]];
            }
            const Eigen::VectorXd correction =
                x_active.isZero(0.0) ? Eigen::VectorXd::Zero(rhs.size()) : solve_principal(a, inactive, rhs);
            for (std::size_t k = 0; k < inactive.size(); ++k) {
                v[inactive[k]] = x[inactive[k]] + correction[static_cast<Eigen::Index>(k)];
            }
        }
        const Field multiplier = a * (v - x);
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool next = multiplier[i] - diag[i] * v[i] > 0.0;
            if (next != active[static_cast<std::size_t>(i)]) {
                active[static_cast<std::size_t>(i)] = next;
                changed = true;
            }
        }
        if (!changed) {
            out.converged = true;
            break;
        }
    }
    out.iterations = std::min(out.iterations, max_iterations);

    const Field multiplier = a * (v - x);
    const double scale = 1.0 + (a * x).cwiseAbs().maxCoeff();
    double kkt = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        kkt = std::max(kkt, std::abs(std::min(diag[i] * v[i], multiplier[i])));
    }
    out.kkt_residual = kkt / scale;
    out.converged = out.converged && out.kkt_residual <= 1e-9;

    const Field residual = x - v;
    out.projection = nu * v;
    out.residual = nu * residual;
    out.distance = std::sqrt(std::max(0.0, residual.dot(a * residual)));
    return out;
}

std::pair<double, double> dist_to_cones(const DiscreteSpace& space, const Field& u) {
    return {project_cone(space, u, Sign::Plus).distance, project_cone(space, u, Sign::Minus).distance};
}

std::string to_string(RegionLabel label) {
    switch (label) {
        case RegionLabel::PositiveRegion:
            return "PositiveRegion";
        case RegionLabel::NegativeRegion:
            return "NegativeRegion";
        case RegionLabel::SignChangingRegion:
            return "SignChangingRegion";
        case RegionLabel::Overlap:
            return "Overlap";
    }
    return "Unknown";
}

RegionLabel parse_region(const std::string& text) {
    for (RegionLabel l : {RegionLabel::PositiveRegion, RegionLabel::NegativeRegion, RegionLabel::SignChangingRegion,
                          RegionLabel::Overlap}) {
        if (to_string(l) == text) {
            return l;
        }
    }
    throw std::invalid_argument("unknown region label: " + text);
}

RegionLabel classify(double d_plus, double d_minus, double mu0) {
    const bool near_plus = d_plus <= mu0;
    const bool near_minus = d_minus <= mu0;
    if (near_plus && near_minus) {
        return RegionLabel::Overlap;
    }
    if (near_plus) {
        return RegionLabel::PositiveRegion;
    }
    if (near_minus) {
        return RegionLabel::NegativeRegion;
    }
    return RegionLabel::SignChangingRegion;
}

RegionLabel region_of(const DiscreteSpace& space, const Field& u, double mu0) {
    if (!(mu0 > 0.0 && mu0 < 1.0)) {
        throw std::invalid_argument("mu0 must lie in (0, 1)");
    }
    const auto [dp, dm] = dist_to_cones(space, u);
    return classify(dp, dm, mu0);
}

namespace {

Field random_mode_mix(const DiscreteSpace& space, Rng& rng, int modes) {
    const int count = std::min<int>(modes, static_cast<int>(space.size()));
    Field f = space.zeros();
    for (int k = 0; k < count; ++k) {
        f += rng.normal() * space.eigenpair(k).vector;
    }
    return f;
}

// A point at cone distance exactly `d` from ν·P, drawn around a random cone point.
Field boundary_sample(const DiscreteSpace& space, Sign sign, double d, Rng& rng, const SchauderOptions& opt) {
    const double nu = sign_value(sign);
    for (int attempt = 0; attempt < 100; ++attempt) {
        Field p = random_mode_mix(space, rng, opt.modes).cwiseAbs();
        const double pn = space.h1_norm(p);
        if (pn > 0.0) {
            p *= opt.amplitude * rng.uniform() / pn;
        }
        p *= nu;
        Field e = random_mode_mix(space, rng, opt.modes) + 0.25 * rng.normal_vector(space.size()) *
                                                               space.eigenpair(0).vector.cwiseAbs().maxCoeff();
        const double en = space.h1_norm(e);
        if (en == 0.0) {
            continue;
        }
        const Field u0 = p + (d * (1.0 + rng.uniform()) / en) * e;
        const ProjectionResult pr = project_cone(space, u0, sign);
        if (pr.distance <= 1e-12) {
            continue;
        }
        return pr.projection + (d / pr.distance) * pr.residual;
    }
    throw std::runtime_error("could not draw a cone-boundary sample");
}

// dist(λA⁻¹Mw, νP), worst over the extreme selections w = lo, hi.
double image_distance(const EnergyProblem& prob, const Field& u, Sign sign) {
    const DiscreteSpace& s = prob.grid();
    const SubdifferentialBox box = subdifferential_box(prob, u);
    double worst = 0.0;
    for (const Eigen::VectorXd* w : {&box.lo, &box.hi}) {
        const Field image = prob.lambda * s.riesz(s.apply_mass(*w));
        worst = std::max(worst, project_cone(s, image, sign).distance);
        if (box.lo == box.hi) {
            break;
        }
    }
    return worst;
}

double growth_exponent(const EnergyProblem& prob) { return prob.potential.growth().q; }

}  // namespace

InvarianceReport check_schauder(const EnergyProblem& prob, double mu0, int sample_count, std::uint64_t seed,
                                const std::vector<Field>& extra, const SchauderOptions& options, double fitted_c) {
    if (sample_count < 1) {
        throw std::invalid_argument("check_schauder needs at least one sample");
    }
    if (!(mu0 > 0.0 && mu0 < 1.0)) {
        throw std::invalid_argument("mu0 must lie in (0, 1)");
    }
    const DiscreteSpace& s = prob.grid();
    Rng rng(seed);
    InvarianceReport report;
    report.mu0 = mu0;
    report.exponent = growth_exponent(prob);

    for (int k = 0; k < sample_count; ++k) {
        const Sign sign = k % 2 == 0 ? Sign::Plus : Sign::Minus;
        const Field u = boundary_sample(s, sign, mu0, rng, options);
        report.samples.push_back({sign, mu0, image_distance(prob, u, sign)});
    }
    for (const Field& u : extra) {
        const auto [dp, dm] = dist_to_cones(s, u);
        if (dp <= mu0) {
            report.samples.push_back({Sign::Plus, dp, image_distance(prob, u, Sign::Plus)});
        }
        if (dm <= mu0) {
            report.samples.push_back({Sign::Minus, dm, image_distance(prob, u, Sign::Minus)});
        }
    }
    report.sample_count = report.samples.size();

    const double q = report.exponent;
    if (fitted_c < 0.0) {
        fitted_c = 0.0;
        for (const auto& smp : report.samples) {
            if (smp.distance > 0.0) {
                fitted_c = std::max(fitted_c, (smp.image_distance - smp.distance / 3.0) / std::pow(smp.distance, q - 1.0));
            }
        }
    }
    report.fitted_c = fitted_c;

    for (std::size_t k = 0; k < report.samples.size(); ++k) {
        const auto& smp = report.samples[k];
        const double ratio = smp.image_distance / mu0;
        if (ratio > report.worst_ratio || k == 0) {
            report.worst_ratio = ratio;
            report.witness = k;
            report.witness_sample = smp;
        }
        const double bound = smp.distance / 3.0 + fitted_c * std::pow(smp.distance, q - 1.0);
        const double excess = smp.image_distance - bound;
        report.worst_inequality_excess = k == 0 ? excess : std::max(report.worst_inequality_excess, excess);
        if (excess > options.tolerance * (1.0 + smp.distance)) {
            report.inequality_holds = false;
        }
    }
    report.passed = report.worst_ratio <= 0.5 + options.tolerance;
    return report;
}

Mu0Selection select_mu0(const EnergyProblem& prob, int samples_per_level, std::uint64_t seed,
                        const SchauderOptions& options) {
    if (samples_per_level < 1) {
        throw std::invalid_argument("select_mu0 needs at least one sample per level");
    }
    const DiscreteSpace& s = prob.grid();
    Rng rng(seed);
    Mu0Selection sel;
    sel.exponent = growth_exponent(prob);
    const double q = sel.exponent;
    if (!(q > 2.0)) {
        throw std::invalid_argument("select_mu0 needs a growth exponent q > 2");
    }
    double c = 0.0;
    for (int level = 0; level <= 6; ++level) {
        const double d = std::ldexp(1.0, -level);
        for (int k = 0; k < samples_per_level; ++k) {
            for (Sign sign : {Sign::Plus, Sign::Minus}) {
                const Field u = boundary_sample(s, sign, d, rng, options);
                const double img = image_distance(prob, u, sign);
                c = std::max(c, (img - d / 3.0) / std::pow(d, q - 1.0));
                ++sel.samples;
            }
        }
    }
    sel.fitted_c = options.c_margin * c;
    const double largest = sel.fitted_c > 0.0 ? std::min(1.0, std::pow(1.0 / (6.0 * sel.fitted_c), 1.0 / (q - 2.0))) : 1.0;
    sel.mu0 = 0.5 * largest;
    return sel;
}

void to_json(nlohmann::json& j, const InvarianceReport& r) {
    j = {{"mu0", r.mu0},
         {"worst_ratio", r.worst_ratio},
         {"passed", r.passed},
         {"fitted_C", r.fitted_c},
         {"exponent_q", r.exponent},
         {"inequality_holds", r.inequality_holds},
         {"worst_inequality_excess", r.worst_inequality_excess},
         {"sample_count", r.sample_count},
         {"witness",
          {{"index", r.witness},
           {"sign", r.witness_sample.sign == Sign::Plus ? "+" : "-"},
           {"distance", r.witness_sample.distance},
           {"image_distance", r.witness_sample.image_distance}}}};
}

void to_json(nlohmann::json& j, const Mu0Selection& r) {
    j = {{"mu0", r.mu0}, {"fitted_C", r.fitted_c}, {"exponent_q", r.exponent}, {"samples", r.samples}};
}

}  // namespace nodal
