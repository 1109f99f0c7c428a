#include "nodal/potential.hpp"

#include <algorithm>
#include <iterator>
#include <cmath>
#include <limits>
#include <sstream>

namespace nodal {

namespace {

double term_value(const PowerTerm& t, double s) {
    if (t.power == 0.0) {
        return t.coeff;
    }
    const double mag = std::pow(std::abs(s), t.power);
    return t.odd && s < 0.0 ? -t.coeff * mag : t.coeff * mag;
}

double term_derivative(const PowerTerm& t, double s, int side) {
    if (t.power == 0.0) {
        return 0.0;
    }
    const double sigma = s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : static_cast<double>(side));
    const double mag = t.power == 1.0 ? 1.0 : std::pow(std::abs(s), t.power - 1.0);
    return t.odd ? t.coeff * t.power * mag : t.coeff * t.power * sigma * mag;
}

double piece_value(const Piece& p, double s) {
    double v = 0.0;
    for (const auto& t : p.terms) {
        v += term_value(t, s);
    }
    return v;
}

double piece_derivative(const Piece& p, double s, int side) {
    double d = 0.0;
    for (const auto& t : p.terms) {
        d += term_derivative(t, s, side);
    }
    return d;
}

std::vector<double> parse_numbers(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        const double v = std::stod(item, &used);
        if (used != item.size()) {
            throw InvalidPotential("bad number in potential spec: " + item);
        }
        out.push_back(v);
    }
    return out;
}

}  // namespace

PiecewisePotential::PiecewisePotential(std::vector<double> breakpoints, std::vector<Piece> pieces,
                                       GrowthParameters growth, CoefficientField coefficient,
                                       std::string name)
    : breakpoints_(std::move(breakpoints)),
      pieces_(std::move(pieces)),
      growth_(growth),
      coefficient_(coefficient),
      name_(std::move(name)) {
    if (pieces_.size() != breakpoints_.size() + 1) {
        throw InvalidPotential("need exactly one more piece than breakpoints");
    }
    if (!std::is_sorted(breakpoints_.begin(), breakpoints_.end()) ||
        std::adjacent_find(breakpoints_.begin(), breakpoints_.end()) != breakpoints_.end()) {
        throw InvalidPotential("breakpoints must be strictly increasing");
    }
    for (std::size_t k = 0; k < pieces_.size(); ++k) {
        const double left = k == 0 ? -std::numeric_limits<double>::infinity() : breakpoints_[k - 1];
        const double right = k == breakpoints_.size() ? std::numeric_limits<double>::infinity() : breakpoints_[k];
        for (const auto& t : pieces_[k].terms) {
            if (!std::isfinite(t.coeff) || !std::isfinite(t.power)) {
                throw InvalidPotential("non-finite potential term");
            }
            if (!(t.power >= 1.0 || (t.power == 0.0 && !t.odd))) {
                throw InvalidPotential("term powers must be 0 (even) or at least 1");
            }
            if (t.power == 1.0 && !t.odd && left < 0.0 && right > 0.0) {
                throw InvalidPotential("|s| term needs a breakpoint at 0");
            }
        }
    }
    // Continuity across kinks.
    for (std::size_t k = 0; k < breakpoints_.size(); ++k) {
        const double b = breakpoints_[k];
        const double l = piece_value(pieces_[k], b);
        const double r = piece_value(pieces_[k + 1], b);
        if (std::abs(l - r) > 1e-9 * (1.0 + std::abs(l))) {
            std::ostringstream msg;
            msg << "potential is discontinuous at s=" << b;
            throw InvalidPotential(msg.str());
        }
    }
}

PiecewisePotential PiecewisePotential::builtin(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::vector<double> args =
        colon == std::string::npos ? std::vector<double>{} : parse_numbers(spec.substr(colon + 1));
    auto need = [&](std::size_t count) {
        if (args.size() != count) {
            throw InvalidPotential("builtin '" + kind + "' expects " + std::to_string(count) + " argument(s)");
        }
    };

    if (kind == "power") {
        need(1);
        const double q = args[0];
        if (!(q > 1.0)) {
            throw InvalidPotential("power:q needs q > 1 (use abs for q = 1)");
        }
        return {{}, {Piece{{{1.0 / q, q, false}}}}, GrowthParameters{1.0, q, q, 1.0}, {}, spec};
    }
    if (kind == "abs") {
        need(0);
        const Piece p{{{1.0, 1.0, false}}};
        return {{0.0}, {p, p}, GrowthParameters{1.0, 3.0, 3.0, 1.0}, {}, spec};
    }
    if (kind == "two_slope") {
        // Cubic reaction a·s³ for |s| ≤ 1 and b·s³ beyond; the reaction jumps at |s| = 1.
        need(2);
        const double a = args[0];
        const double b = args[1];
        if (!(a > 0.0 && b > 0.0)) {
            throw InvalidPotential("two_slope needs positive slopes");
        }
        const Piece inner{{{a / 4.0, 4.0, false}}};
        const Piece outer{{{b / 4.0, 4.0, false}, {(a - b) / 4.0, 0.0, false}}};
        return {{-1.0, 1.0}, {outer, inner, outer}, GrowthParameters{std::max(a, b), 4.0, 4.0, 1.0}, {}, spec};
    }
    if (kind == "capped_power") {
        need(2);
        const double q = args[0];
        const double cap = args[1];
        if (!(q > 1.0 && cap > 0.0)) {
            throw InvalidPotential("capped_power needs q > 1 and cap > 0");
        }
        const double slope = std::pow(cap, q - 1.0);
        const Piece inner{{{1.0 / q, q, false}}};
        const Piece outer{{{slope, 1.0, false}, {std::pow(cap, q) / q - std::pow(cap, q), 0.0, false}}};
        return {{-cap, cap}, {outer, inner, outer}, GrowthParameters{std::max(1.0, slope), q, q, 1.0}, {}, spec};
    }
    throw InvalidPotential("unknown builtin potential: " + spec);
}

PiecewisePotential PiecewisePotential::polynomial_table(std::vector<double> breakpoints,
                                                        const std::vector<std::vector<double>>& coefficients) {
    std::vector<Piece> pieces;
    pieces.reserve(coefficients.size());
    for (const auto& row : coefficients) {
        Piece p;
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (row[i] != 0.0) {
                p.terms.push_back({row[i], static_cast<double>(i), i % 2 == 1});
            }
        }
        pieces.push_back(std::move(p));
    }
    return {std::move(breakpoints), std::move(pieces), {}, {}, "table"};
}

PiecewisePotential PiecewisePotential::with_growth(const GrowthParameters& g) const {
    PiecewisePotential out = *this;
    out.growth_ = g;
    return out;
}

PiecewisePotential PiecewisePotential::with_coefficient(const CoefficientField& c) const {
    PiecewisePotential out = *this;
    out.coefficient_ = c;
    return out;
}

PiecewisePotential PiecewisePotential::scaled(double c) const {
    PiecewisePotential out = *this;
    for (auto& piece : out.pieces_) {
        for (auto& t : piece.terms) {
            t.coeff *= c;
        }
    }
    out.name_ = "scaled(" + name_ + ")";
    return out;
}

PiecewisePotential operator+(const PiecewisePotential& a, const PiecewisePotential& b) {
    std::vector<double> merged;
    std::set_union(a.breakpoints_.begin(), a.breakpoints_.end(), b.breakpoints_.begin(), b.breakpoints_.end(),
                   std::back_inserter(merged));
    std::vector<Piece> pieces;
    pieces.reserve(merged.size() + 1);
    for (std::size_t k = 0; k <= merged.size(); ++k) {
        // Any point inside (m_{k-1}, m_k] selects the right piece of each operand.
        const double probe = k < merged.size() ? merged[k] : std::numeric_limits<double>::infinity();
        Piece p = a.pieces_[a.piece_index(probe)];
        const Piece& q = b.pieces_[b.piece_index(probe)];
        p.terms.insert(p.terms.end(), q.terms.begin(), q.terms.end());
        pieces.push_back(std::move(p));
    }
    return {std::move(merged), std::move(pieces), a.growth_, a.coefficient_, a.name_ + "+" + b.name_};
}

std::size_t PiecewisePotential::piece_index(double s) const {
    // First breakpoint >= s: piece k covers (b_{k-1}, b_k].
    return static_cast<std::size_t>(std::lower_bound(breakpoints_.begin(), breakpoints_.end(), s) -
                                    breakpoints_.begin());
}

bool PiecewisePotential::is_breakpoint(double s) const {
    return std::binary_search(breakpoints_.begin(), breakpoints_.end(), s);
}

double PiecewisePotential::value(double s) const { return piece_value(pieces_[piece_index(s)], s); }

double PiecewisePotential::one_sided_derivative(double s, int side) const {
    std::size_t k = piece_index(s);
    if (side > 0 && is_breakpoint(s)) {
        ++k;
    }
    return piece_derivative(pieces_[k], s, side);
}

ClarkeInterval PiecewisePotential::clarke(double s) const {
    const double left = one_sided_derivative(s, -1);
    const double right = one_sided_derivative(s, +1);
    return {std::min(left, right), std::max(left, right)};
}

double PiecewisePotential::difference(double a, double b) const {
    if (a == b) {
        return 0.0;
    }
    // Five-point Gauss-Legendre on each smooth segment of [lo, hi].
    static constexpr double nodes[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                        0.9061798459386640};
    static constexpr double weights[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                          0.4786286704993665, 0.2369268850561891};
    const double lo = std::min(a, b);
    const double hi = std::max(a, b);
    std::vector<double> cuts{lo};
    for (double bp : breakpoints_) {
        if (bp > lo && bp < hi) {
            cuts.push_back(bp);
        }
    }
    if (lo < 0.0 && hi > 0.0) {
        cuts.push_back(0.0);
    }
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double half = 0.5 * (cuts[k + 1] - cuts[k]);
        const double mid = 0.5 * (cuts[k + 1] + cuts[k]);
        if (half == 0.0) {
            continue;
        }
        const Piece& piece = pieces_[piece_index(mid)];
        double segment = 0.0;
        for (int g = 0; g < 5; ++g) {
            segment += weights[g] * piece_derivative(piece, mid + half * nodes[g], 1);
        }
        total += half * segment;
    }
    return b > a ? total : -total;
}

double eval_j(const PiecewisePotential& p, const Point& x, double s) { return p.coefficient()(x) * p.value(s); }

double eval_j_difference(const PiecewisePotential& p, const Point& x, double a, double b) {
    return p.coefficient()(x) * p.difference(a, b);
}

ClarkeInterval clarke_interval(const PiecewisePotential& p, const Point& x, double s) {
    const double c = p.coefficient()(x);
    const ClarkeInterval base = p.clarke(s);
    return c >= 0.0 ? ClarkeInterval{c * base.lo, c * base.hi} : ClarkeInterval{c * base.hi, c * base.lo};
}

double gen_dir_derivative(const PiecewisePotential& p, const Point& x, double s, double h) {
    const ClarkeInterval iv = clarke_interval(p, x, s);
    return std::max(iv.lo * h, iv.hi * h);
}

bool HypothesisReport::all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const HypothesisCheck& c) { return c.passed; });
}

const HypothesisCheck& HypothesisReport::check(const std::string& id) const {
    for (const auto& c : checks) {
        if (c.id == id) {
            return c;
        }
    }
    throw std::out_of_range("no hypothesis check named " + id);
}

HypothesisReport check_hypotheses(const PiecewisePotential& p, const SamplePlan& plan) {
    const GrowthParameters& g = p.growth();
    std::vector<Point> xs = plan.points;
    if (xs.empty()) {
        xs.push_back({0.0, 0.0});
    }

    std::vector<double> grid;
    const int count = std::max(plan.samples, 2);
    for (int k = 0; k < count; ++k) {
        grid.push_back(-plan.s_max + 2.0 * plan.s_max * k / (count - 1));
    }
    grid.insert(grid.end(), p.breakpoints().begin(), p.breakpoints().end());
    grid.push_back(0.0);

    HypothesisReport report;

    HypothesisCheck lip{"i", true, 0.0, 0.0, "j(x,0) = 0, continuity at kinks, finite one-sided slopes"};
    for (const auto& x : xs) {
        const double j0 = eval_j(p, x, 0.0);
        if (std::abs(j0) > 1e-14) {
            lip.passed = false;
            lip.worst = std::max(lip.worst, std::abs(j0));
        }
        for (double s : grid) {
            const ClarkeInterval iv = clarke_interval(p, x, s);
            if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || !std::isfinite(eval_j(p, x, s))) {
                lip.passed = false;
                lip.witness_s = s;
            }
        }
        if (p.coefficient()(x) < 0.0) {
            lip.passed = false;
            lip.note += "; negative coefficient";
        }
    }
    report.checks.push_back(lip);

    HypothesisCheck growth{"ii", true, 0.0, 0.0, "|xi| <= a1 (1 + |s|^(q-1)) at both interval endpoints"};
    for (const auto& x : xs) {
        for (double s : grid) {
            const ClarkeInterval iv = clarke_interval(p, x, s);
            const double bound = g.a1 * (1.0 + std::pow(std::abs(s), g.q - 1.0));
            const double excess = std::max(std::abs(iv.lo), std::abs(iv.hi)) / bound;
            if (excess > growth.worst) {
                growth.worst = excess;
                growth.witness_s = s;
            }
        }
    }
    growth.passed = growth.worst <= 1.0 + 1e-12;
    report.checks.push_back(growth);

    HypothesisCheck superlinear{"iii", true, std::numeric_limits<double>::infinity(), 0.0,
                                "quotient (mu_hat*min(xi*z) - 2j(z))/|z|^mu on the |z| ladder; "
                                "the limit is read as |z| -> infinity"};
    for (const auto& x : xs) {
        for (int sign : {-1, 1}) {
            double previous = -std::numeric_limits<double>::infinity();
            for (double mag : plan.ladder) {
                const double z = sign * mag;
                const ClarkeInterval iv = clarke_interval(p, x, z);
                const double pairing = std::min(iv.lo * z, iv.hi * z);
                const double quotient = (g.mu_hat * pairing - 2.0 * eval_j(p, x, z)) / std::pow(mag, g.mu);
                if (quotient < superlinear.worst) {
                    superlinear.worst = quotient;
                    superlinear.witness_s = z;
                }
                if (quotient < previous * (1.0 - 1e-12) - 1e-300) {
                    report.superlinear_quotient_monotone = false;
                }
                previous = quotient;
            }
        }
    }
    superlinear.passed = superlinear.worst > 0.0;
    report.checks.push_back(superlinear);

    HypothesisCheck vanishing{"iv", true, 0.0, 0.0, "2j(z)/z^2 -> 0 along z = +-2^-k"};
    const int tail = std::min(5, plan.dyadic_steps);
    for (const auto& x : xs) {
        for (int sign : {-1, 1}) {
            for (int k = plan.dyadic_steps - tail + 1; k <= plan.dyadic_steps; ++k) {
                const double z = sign * std::ldexp(1.0, -k);
                const double quotient = 2.0 * eval_j(p, x, z) / (z * z);
                if (std::abs(quotient) > vanishing.worst) {
                    vanishing.worst = std::abs(quotient);
                    vanishing.witness_s = z;
                }
            }
        }
    }
    vanishing.passed = vanishing.worst <= plan.vanishing_tol;
    report.checks.push_back(vanishing);

    HypothesisCheck sign{"v", true, 0.0, 0.0, "z * xi >= 0 for xi in the Clarke interval"};
    for (const auto& x : xs) {
        for (double s : grid) {
            const ClarkeInterval iv = clarke_interval(p, x, s);
            const double worst = std::min(s * iv.lo, s * iv.hi);
            if (worst < sign.worst) {
                sign.worst = worst;
                sign.witness_s = s;
            }
        }
    }
    sign.passed = sign.worst >= 0.0;
    report.checks.push_back(sign);

    HypothesisCheck exponents{"exponents", true, 0.0, 0.0, ""};
    const int n = plan.space_dimension;
    const double critical = n <= 2 ? std::numeric_limits<double>::infinity() : 2.0 * n / (n - 2.0);
    const double mu_floor = n * (g.q / 2.0 - 1.0);
    exponents.passed = g.a1 > 0.0 && g.q > 2.0 && g.q < critical && g.mu > mu_floor;
    exponents.worst = g.mu - mu_floor;
    exponents.note = "a1 > 0, 2 < q < 2*, mu > N(q/2 - 1)";
    report.checks.push_back(exponents);

    return report;
}

}  // namespace nodal
