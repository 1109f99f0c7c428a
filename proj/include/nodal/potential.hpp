#pragma once

#include "nodal/mesh_space.hpp"

#include <string>
#include <vector>

namespace nodal {

/// coeff · |s|^power, multiplied by sign(s) when odd.
struct PowerTerm {
    double coeff = 0.0;
    double power = 0.0;
    bool odd = false;
};

/// A smooth formula valid on the closure of one interval between breakpoints.
struct Piece {
    std::vector<PowerTerm> terms;
};

/// Growth constants declared alongside a potential: |ξ| ≤ a1(1+|s|^{q-1}),
/// superlinearity exponent mu, and the multiplier mu_hat used in the
/// superlinearity quotient.
struct GrowthParameters {
    double a1 = 1.0;
    double q = 4.0;
    double mu = 4.0;
    double mu_hat = 1.0;
};

/// Nonnegative affine coefficient c(x) = c0 + cx·x + cy·y multiplying j.
struct CoefficientField {
    double c0 = 1.0;
    double cx = 0.0;
    double cy = 0.0;

    double operator()(const Point& x) const { return c0 + cx * x[0] + cy * x[1]; }
    bool autonomous() const { return cx == 0.0 && cy == 0.0; }
};

struct ClarkeInterval {
    double lo = 0.0;
    double hi = 0.0;

    bool degenerate() const { return lo == hi; }
    bool contains(double xi, double tol = 0.0) const { return xi >= lo - tol && xi <= hi + tol; }
};

struct InvalidPotential : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Locally Lipschitz integrand j(x, s) = c(x)·j(s) built from smooth pieces
/// separated by kinks. Piece k covers (b_{k-1}, b_k]; a value at a
/// breakpoint is taken from the left piece, derivatives from both sides.
class PiecewisePotential {
public:
    PiecewisePotential() = default;
    PiecewisePotential(std::vector<double> breakpoints, std::vector<Piece> pieces,
                       GrowthParameters growth = {}, CoefficientField coefficient = {},
                       std::string name = "table");

    /// Builtins: "power:q", "abs", "two_slope:a,b", "capped_power:q,cap".
    static PiecewisePotential builtin(const std::string& spec);
    /// Polynomial table: coefficients[k][i] multiplies s^i on piece k.
    static PiecewisePotential polynomial_table(std::vector<double> breakpoints,
                                               const std::vector<std::vector<double>>& coefficients);

    const std::vector<double>& breakpoints() const { return breakpoints_; }
    const std::vector<Piece>& pieces() const { return pieces_; }
    const GrowthParameters& growth() const { return growth_; }
    const CoefficientField& coefficient() const { return coefficient_; }
    const std::string& name() const { return name_; }

    PiecewisePotential with_growth(const GrowthParameters& g) const;
    PiecewisePotential with_coefficient(const CoefficientField& c) const;
    /// c·j for a real c; intervals scale (and flip for c < 0).
    PiecewisePotential scaled(double c) const;
    /// Sum on the merged breakpoint set; growth data from the left operand.
    friend PiecewisePotential operator+(const PiecewisePotential& a, const PiecewisePotential& b);

    /// Autonomous part j(s).
    double value(double s) const;
    /// j(b) − j(a) by quadrature of j′, free of the cancellation in value(b) − value(a).
    double difference(double a, double b) const;
    /// One-sided derivative; side is +1 (from the right) or -1 (from the left).
    double one_sided_derivative(double s, int side) const;
    bool is_breakpoint(double s) const;
    /// Autonomous Clarke interval ∂j(s).
    ClarkeInterval clarke(double s) const;

private:
    std::size_t piece_index(double s) const;

    std::vector<double> breakpoints_;
    std::vector<Piece> pieces_{Piece{}};
    GrowthParameters growth_;
    CoefficientField coefficient_;
    std::string name_ = "zero";
};

double eval_j(const PiecewisePotential& p, const Point& x, double s);
double eval_j_difference(const PiecewisePotential& p, const Point& x, double a, double b);
ClarkeInterval clarke_interval(const PiecewisePotential& p, const Point& x, double s);
/// Support function of the Clarke interval in direction h.
double gen_dir_derivative(const PiecewisePotential& p, const Point& x, double s, double h);

struct SamplePlan {
    double s_max = 10.0;
    int samples = 2001;
    int dyadic_steps = 40;
    std::vector<double> ladder{10.0, 100.0, 1000.0};
    double vanishing_tol = 1e-6;
    int space_dimension = 1;
    /// Points x at which the coefficient is evaluated; empty means x = 0.
    std::vector<Point> points;
};

struct HypothesisCheck {
    std::string id;
    bool passed = true;
    double worst = 0.0;
    double witness_s = 0.0;
    std::string note;
};

struct HypothesisReport {
    std::vector<HypothesisCheck> checks;
    bool superlinear_quotient_monotone = true;

    bool all_passed() const;
    const HypothesisCheck& check(const std::string& id) const;
};

/// Sampled checks of the growth, superlinearity, vanishing-at-zero and sign
/// conditions. Ids: "i", "ii", "iii", "iv", "v", "exponents".
HypothesisReport check_hypotheses(const PiecewisePotential& p, const SamplePlan& plan = {});

}  // namespace nodal
