// energetics.hpp
// Configuration potentials, their Yosida/Moreau regularisations, the
// composition-dependent gradient coefficient a(u) and the free energy.

#pragma once

#include "nlch/grid.hpp"

#include <functional>
#include <limits>
#include <memory>
#include <optional>

namespace nlch {

struct DomainViolation : std::domain_error {
    using std::domain_error::domain_error;
};

struct ResolventFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonPositiveCoefficient : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

enum class PotentialFamily { Logarithmic, SixthPolynomial, Custom };

/// Monotone part of a user-supplied potential. f0 must be nondecreasing on
/// (lo, hi) with f0(0) = 0, F0' = f0 and F0(0) = 0.
struct CustomPotential {
    std::function<double(double)> F0;
    std::function<double(double)> f0;
    std::function<double(double)> f0prime;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    /// Set when f0(r) = slope * r; lets linear analyses recognise the spec.
    std::optional<double> slope;
};

/// Full potential F(r) = F0(r) - (lambda/2) r^2 with F0 convex, optionally
/// replaced by its Moreau envelope of parameter sigma.
class PotentialSpec {
public:
    PotentialSpec() = default;

    static PotentialSpec logarithmic(double lambda, std::optional<double> sigma = std::nullopt)
    {
        PotentialSpec p;
        p.family_ = PotentialFamily::Logarithmic;
        p.lambda_ = lambda;
        p.sigma_ = sigma;
        p.validate();
        return p;
    }

    /// F(u) = (u+1)^2 (u^2+h0) (u-1)^2. lambda must make F + (lambda/2)u^2
    /// convex, see min_convexifying_lambda().
    static PotentialSpec sixth_polynomial(double h0, double lambda, std::optional<double> sigma = std::nullopt)
    {
        PotentialSpec p;
        p.family_ = PotentialFamily::SixthPolynomial;
        p.h0_ = h0;
        p.lambda_ = lambda;
        p.sigma_ = sigma;
        p.validate();
        return p;
    }

    static PotentialSpec custom(CustomPotential c, double lambda, std::optional<double> sigma = std::nullopt)
    {
        PotentialSpec p;
        p.family_ = PotentialFamily::Custom;
        p.custom_ = std::make_shared<const CustomPotential>(std::move(c));
        p.lambda_ = lambda;
        p.sigma_ = sigma;
        p.validate();
        return p;
    }

    /// Monotone part f0(r) = slope * r.
    static PotentialSpec linear(double slope, double lambda = 0.0, std::optional<double> sigma = std::nullopt)
    {
        CustomPotential c;
        c.F0 = [slope](double r) { return 0.5 * slope * r * r; };
        c.f0 = [slope](double r) { return slope * r; };
        c.f0prime = [slope](double) { return slope; };
        c.slope = slope;
        return custom(std::move(c), lambda, sigma);
    }

    /// Smallest lambda for which the sixth-degree polynomial is lambda-convex.
    static double min_convexifying_lambda(double h0)
    {
        // F'' = 30u^4 + 12(h0-2)u^2 + 2(1-2h0); extremes at u = 0 and u^2 = (2-h0)/5
        double m = 2.0 * (1.0 - 2.0 * h0);
        const double u2 = (2.0 - h0) / 5.0;
        if (u2 > 0.0)
            m = std::min(m, 30.0 * u2 * u2 + 12.0 * (h0 - 2.0) * u2 + 2.0 * (1.0 - 2.0 * h0));
        return std::max(0.0, -m);
    }

    PotentialSpec with_sigma(std::optional<double> sigma) const
    {
        PotentialSpec p = *this;
        p.sigma_ = sigma;
        p.validate();
        return p;
    }

    PotentialFamily family() const { return family_; }
    double lambda() const { return lambda_; }
    double h0() const { return h0_; }
    std::optional<double> sigma() const { return sigma_; }
    const CustomPotential* custom_part() const { return custom_.get(); }

    /// True for f0(r) = slope * r with no concave perturbation beyond lambda.
    std::optional<double> linear_slope() const
    {
        if (family_ == PotentialFamily::Custom && custom_->slope)
            return *custom_->slope;
        return std::nullopt;
    }

    /// Open interval on which f0 is finite.
    std::pair<double, double> domain() const
    {
        switch (family_) {
        case PotentialFamily::Logarithmic:
            return {-1.0, 1.0};
        case PotentialFamily::SixthPolynomial:
            return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
        case PotentialFamily::Custom:
            break;
        }
        return {custom_->lo, custom_->hi};
    }

    bool singular() const
    {
        const auto [lo, hi] = domain();
        return std::isfinite(lo) || std::isfinite(hi);
    }

    // Monotone part. Arguments outside domain() raise DomainViolation.

    double F0(double r) const
    {
        check_domain(r);
        switch (family_) {
        case PotentialFamily::Logarithmic:
            return (1.0 - r) * std::log1p(-r) + (1.0 + r) * std::log1p(r);
        case PotentialFamily::SixthPolynomial: {
            const double q = r * r - 1.0;
            return q * q * (r * r + h0_) + 0.5 * lambda_ * r * r;
        }
        case PotentialFamily::Custom:
            break;
        }
        return custom_->F0(r);
    }

    double f0(double r) const
    {
        check_domain(r);
        switch (family_) {
        case PotentialFamily::Logarithmic:
            return std::log1p(r) - std::log1p(-r);
        case PotentialFamily::SixthPolynomial: {
            const double r2 = r * r;
            return r * (6.0 * r2 * r2 + 4.0 * (h0_ - 2.0) * r2 + 2.0 * (1.0 - 2.0 * h0_)) + lambda_ * r;
        }
        case PotentialFamily::Custom:
            break;
        }
        return custom_->f0(r);
    }

    double f0prime(double r) const
    {
        check_domain(r);
        switch (family_) {
        case PotentialFamily::Logarithmic:
            return 2.0 / ((1.0 - r) * (1.0 + r));
        case PotentialFamily::SixthPolynomial: {
            const double r2 = r * r;
            return 30.0 * r2 * r2 + 12.0 * (h0_ - 2.0) * r2 + 2.0 * (1.0 - 2.0 * h0_) + lambda_;
        }
        case PotentialFamily::Custom:
            break;
        }
        return custom_->f0prime(r);
    }

private:
    void check_domain(double r) const
    {
        const auto [lo, hi] = domain();
        if (!(r > lo && r < hi))
            throw DomainViolation("potential: argument " + std::to_string(r) + " outside the domain of f0");
    }

    void validate() const
    {
        if (!(lambda_ >= 0.0))
            throw std::invalid_argument("PotentialSpec: lambda must be >= 0");
        if (sigma_ && !(*sigma_ > 0.0 && *sigma_ <= 1.0))
            throw std::invalid_argument("PotentialSpec: sigma must lie in (0, 1]");
        if (family_ == PotentialFamily::SixthPolynomial) {
            const double need = min_convexifying_lambda(h0_);
            if (lambda_ < need)
                throw std::invalid_argument("PotentialSpec: sixth-degree potential with h0=" + std::to_string(h0_) +
                                            " needs lambda >= " + std::to_string(need));
        }
        if (family_ == PotentialFamily::Custom) {
            if (!custom_ || !custom_->F0 || !custom_->f0 || !custom_->f0prime)
                throw std::invalid_argument("PotentialSpec: custom potential needs F0, f0 and f0'");
            if (!(custom_->lo < 0.0 && custom_->hi > 0.0))
                throw std::invalid_argument("PotentialSpec: custom domain must contain 0");
            if (custom_->f0(0.0) != 0.0)
                throw std::invalid_argument("PotentialSpec: custom f0 must vanish at 0");
        }
    }

    PotentialFamily family_ = PotentialFamily::Logarithmic;
    double lambda_ = 0.0;
    double h0_ = 0.0;
    std::optional<double> sigma_;
    std::shared_ptr<const CustomPotential> custom_;
};

/// Resolvent J = (I + sigma f0)^{-1}(r) together with f0(J) and f0'(J).
/// For the logarithmic family the root is sought in s = atanh(J), which keeps
/// it representable when J is within rounding distance of +-1.
struct Resolvent {
    double J;
    double f0J;       // = (r - J) / sigma
    double f0primeJ;  // may be +inf when J rounds to the boundary
    double F0J;
};

inline Resolvent resolvent(const PotentialSpec& spec, double sigma, double r)
{
    if (!(sigma > 0.0))
        throw std::invalid_argument("resolvent: sigma must be positive");
    constexpr int max_iter = 200;
    constexpr double tol = 1e-12;

    if (spec.family() == PotentialFamily::Logarithmic) {
        // tanh(s) + 2 sigma s = |r|, monotone in s, root in [0, |r| / (2 sigma)]
        const double target = std::abs(r);
        double lo = 0.0, hi = target / (2.0 * sigma);
        double s = std::min(hi, std::atanh(std::min(target, 0.5)));
        bool done = target == 0.0;
        for (int it = 0; it < max_iter && !done; ++it) {
            const double g = std::tanh(s) + 2.0 * sigma * s - target;
            if (std::abs(g) <= tol) {
                done = true;
                break;
            }
            if (g > 0.0)
                hi = s;
            else
                lo = s;
            const double c = std::cosh(s);
            const double dg = 1.0 / (c * c) + 2.0 * sigma;
            double next = s - g / dg;
            if (!(next > lo && next < hi))
                next = 0.5 * (lo + hi);
            if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, hi)) {
                s = next;
                done = true;
                break;
            }
            s = next;
        }
        if (!done)
            throw ResolventFailure("resolvent: logarithmic root not converged for r=" + std::to_string(r));
        if (target == 0.0)
            s = 0.0;
        const double sign = r < 0.0 ? -1.0 : 1.0;
        const double e = std::exp(-2.0 * s);
        const double one_minus_y = 2.0 * e / (1.0 + e);
        const double logterm = std::log(2.0) - std::log1p(e);
        Resolvent res;
        res.J = sign * std::tanh(s);
        res.f0J = sign * 2.0 * s;
        const double ch = std::cosh(s);
        res.f0primeJ = 2.0 * ch * ch;
        res.F0J = 2.0 * logterm - 2.0 * s * one_minus_y;
        return res;
    }

    // Generic safeguarded Newton on y + sigma f0(y) = r; the root lies
    // between 0 and r because f0 is monotone with f0(0) = 0.
    const auto [dlo, dhi] = spec.domain();
    const double margin = 1e-15;
    double lo = std::min(0.0, r), hi = std::max(0.0, r);
    if (std::isfinite(dlo))
        lo = std::max(lo, dlo + margin * std::max(1.0, std::abs(dlo)));
    if (std::isfinite(dhi))
        hi = std::min(hi, dhi - margin * std::max(1.0, std::abs(dhi)));
    auto g = [&](double y) { return y + sigma * spec.f0(y) - r; };
    double y = r / (1.0 + sigma * spec.f0prime(0.0));
    if (!(y >= lo && y <= hi))
        y = 0.5 * (lo + hi);
    bool done = r == 0.0;
    if (done)
        y = 0.0;
    for (int it = 0; it < max_iter && !done; ++it) {
        const double gy = g(y);
        if (!std::isfinite(gy))
            throw ResolventFailure("resolvent: f0 is not finite at y=" + std::to_string(y));
        if (std::abs(gy) <= tol) {
            done = true;
            break;
        }
        if (gy > 0.0)
            hi = y;
        else
            lo = y;
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(y))) {
            done = true;
            break;
        }
        double next = y - gy / (1.0 + sigma * spec.f0prime(y));
        if (!(next > lo && next < hi))
            next = 0.5 * (lo + hi);
        y = next;
    }
    if (!done)
        throw ResolventFailure("resolvent: no convergence in 200 iterations for r=" + std::to_string(r));
    return Resolvent{y, spec.f0(y), spec.f0prime(y), spec.F0(y)};
}

/// Yosida approximation f_sigma(r) = (r - J_sigma(r)) / sigma of f0.
inline double yosida_f(const PotentialSpec& spec, double sigma, double r)
{
    return resolvent(spec, sigma, r).f0J;
}

/// Moreau envelope F_sigma(r) = |r - J|^2 / (2 sigma) + F0(J).
inline double moreau_F(const PotentialSpec& spec, double sigma, double r)
{
    const Resolvent res = resolvent(spec, sigma, r);
    return 0.5 * sigma * res.f0J * res.f0J + res.F0J;
}

/// d/dr f_sigma = f0'(J) / (1 + sigma f0'(J)).
inline double yosida_fprime(const PotentialSpec& spec, double sigma, double r)
{
    const Resolvent res = resolvent(spec, sigma, r);
    if (std::isinf(res.f0primeJ))
        return 1.0 / sigma;
    return res.f0primeJ / (1.0 + sigma * res.f0primeJ);
}

/// Full potential F(r), including -(lambda/2) r^2.
inline double potential_F(const PotentialSpec& spec, double r)
{
    const double concave = 0.5 * spec.lambda() * r * r;
    if (spec.sigma())
        return moreau_F(spec, *spec.sigma(), r) - concave;
    return spec.F0(r) - concave;
}

/// f = F'.
inline double potential_f(const PotentialSpec& spec, double r)
{
    if (spec.sigma())
        return yosida_f(spec, *spec.sigma(), r) - spec.lambda() * r;
    return spec.f0(r) - spec.lambda() * r;
}

inline double potential_fprime(const PotentialSpec& spec, double r)
{
    if (spec.sigma())
        return yosida_fprime(spec, *spec.sigma(), r) - spec.lambda();
    return spec.f0prime(r) - spec.lambda();
}

enum class CoefficientFamily { Constant, EvenQuadratic, GeneralQuadratic };

/// Quintic on [0, 1] matching value and two derivatives at both ends.
struct QuinticHermite {
    std::array<double, 6> c{};

    QuinticHermite() = default;
    QuinticHermite(double y0, double d0, double s0, double y1, double d1, double s1)
    {
        c[0] = y0;
        c[1] = d0;
        c[2] = 0.5 * s0;
        const double A = y1 - (c[0] + c[1] + c[2]);
        const double B = d1 - (c[1] + 2.0 * c[2]);
        const double C = s1 - 2.0 * c[2];
        c[3] = 10.0 * A - 4.0 * B + 0.5 * C;
        c[4] = -15.0 * A + 7.0 * B - C;
        c[5] = 6.0 * A - 3.0 * B + 0.5 * C;
    }

    double value(double t) const
    {
        return c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
    }
    double d1(double t) const
    {
        return c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
    }
    double d2(double t) const
    {
        return 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5]));
    }
};

class CoefficientSpec;

/// Monotone table of phi(s) = int_0^s sqrt(a(r)) dr on [-2.5, 2.5], cubic
/// Hermite interpolation in between and affine continuation outside.
class PhiTable {
public:
    static constexpr int nodes = 4096;
    static constexpr double lo = -2.5;
    static constexpr double hi = 2.5;

    explicit PhiTable(const std::function<double(double)>& sqrt_a);

    double value(double r) const;
    double derivative(double r) const;
    double inverse(double s) const;

private:
    double step_ = (hi - lo) / (nodes - 1);
    std::vector<double> phi_;
    std::vector<double> slope_;
};

namespace detail {

inline double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                          double fb, double whole, double tol, int depth)
{
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double diff = left + right - whole;
    if (depth <= 0 || std::abs(diff) <= 15.0 * tol)
        return left + right + diff / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

} // namespace detail

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol = 1e-12)
{
    if (a == b)
        return 0.0;
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50);
}

inline PhiTable::PhiTable(const std::function<double(double)>& sqrt_a)
    : phi_(nodes), slope_(nodes)
{
    for (int i = 0; i < nodes; ++i)
        slope_[i] = sqrt_a(lo + i * step_);
    // anchor at the node just below zero, accumulate outward
    const int i0 = static_cast<int>(std::floor((0.0 - lo) / step_));
    const double per_cell_tol = 1e-12 / nodes;
    phi_[i0] = adaptive_simpson(sqrt_a, 0.0, lo + i0 * step_, 1e-13);
    for (int i = i0 + 1; i < nodes; ++i)
        phi_[i] = phi_[i - 1] + adaptive_simpson(sqrt_a, lo + (i - 1) * step_, lo + i * step_, per_cell_tol);
    for (int i = i0 - 1; i >= 0; --i)
        phi_[i] = phi_[i + 1] - adaptive_simpson(sqrt_a, lo + i * step_, lo + (i + 1) * step_, per_cell_tol);
}

inline double PhiTable::value(double r) const
{
    if (r <= lo)
        return phi_.front() + slope_.front() * (r - lo);
    if (r >= hi)
        return phi_.back() + slope_.back() * (r - hi);
    const int i = std::min(nodes - 2, static_cast<int>((r - lo) / step_));
    const double t = (r - (lo + i * step_)) / step_;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * phi_[i] + (t3 - 2 * t2 + t) * step_ * slope_[i] + (-2 * t3 + 3 * t2) * phi_[i + 1] +
           (t3 - t2) * step_ * slope_[i + 1];
}

inline double PhiTable::derivative(double r) const
{
    if (r <= lo)
        return slope_.front();
    if (r >= hi)
        return slope_.back();
    const int i = std::min(nodes - 2, static_cast<int>((r - lo) / step_));
    const double t = (r - (lo + i * step_)) / step_;
    const double t2 = t * t;
    return (6 * t2 - 6 * t) * phi_[i] / step_ + (3 * t2 - 4 * t + 1) * slope_[i] + (-6 * t2 + 6 * t) * phi_[i + 1] / step_ +
           (3 * t2 - 2 * t) * slope_[i + 1];
}

inline double PhiTable::inverse(double s) const
{
    if (s <= phi_.front())
        return lo + (s - phi_.front()) / slope_.front();
    if (s >= phi_.back())
        return hi + (s - phi_.back()) / slope_.back();
    const auto it = std::upper_bound(phi_.begin(), phi_.end(), s);
    const int i = std::clamp(static_cast<int>(it - phi_.begin()) - 1, 0, nodes - 2);
    double a = lo + i * step_, b = a + step_;
    double r = a + step_ * (s - phi_[i]) / (phi_[i + 1] - phi_[i]);
    for (int it2 = 0; it2 < 100; ++it2) {
        const double g = value(r) - s;
        if (std::abs(g) <= 1e-14 * std::max(1.0, std::abs(s)))
            break;
        if (g > 0.0)
            b = r;
        else
            a = r;
        double next = r - g / derivative(r);
        if (!(next > a && next < b))
            next = 0.5 * (a + b);
        if (b - a <= 1e-15)
            break;
        r = next;
    }
    return r;
}

/// Gradient-energy coefficient a(r): a polynomial of degree <= 2 on [-1, 1],
/// joined by quintic Hermite pieces on [1, 2] and [-2, -1] to the constants
/// a+ and a- (C^2 everywhere), constant beyond +-2.
class CoefficientSpec {
public:
    CoefficientSpec() : CoefficientSpec(CoefficientFamily::Constant, {1.0, 0.0, 0.0}) {}

    static CoefficientSpec constant(double c) { return CoefficientSpec(CoefficientFamily::Constant, {c, 0.0, 0.0}); }
    static CoefficientSpec even_quadratic(double g0, double g2)
    {
        return CoefficientSpec(CoefficientFamily::EvenQuadratic, {g0, 0.0, g2});
    }
    static CoefficientSpec general_quadratic(double a0, double a1, double a2)
    {
        return CoefficientSpec(CoefficientFamily::GeneralQuadratic, {a0, a1, a2});
    }

    CoefficientFamily family() const { return family_; }
    const std::array<double, 3>& polynomial() const { return poly_; }
    double a_minus() const { return a_minus_; }
    double a_plus() const { return a_plus_; }
    double a_low() const { return a_low_; }
    double a_high() const { return a_high_; }
    bool is_constant() const { return family_ == CoefficientFamily::Constant; }

    double a(double r) const
    {
        if (r >= -1.0 && r <= 1.0)
            return poly(r);
        if (r > 1.0)
            return r >= 2.0 ? a_plus_ : right_.value(r - 1.0);
        return r <= -2.0 ? a_minus_ : left_.value(-1.0 - r);
    }

    double aprime(double r) const
    {
        if (r >= -1.0 && r <= 1.0)
            return poly_[1] + 2.0 * poly_[2] * r;
        if (r > 1.0)
            return r >= 2.0 ? 0.0 : right_.d1(r - 1.0);
        return r <= -2.0 ? 0.0 : -left_.d1(-1.0 - r);
    }

    double asecond(double r) const
    {
        if (r >= -1.0 && r <= 1.0)
            return 2.0 * poly_[2];
        if (r > 1.0)
            return r >= 2.0 ? 0.0 : right_.d2(r - 1.0);
        return r <= -2.0 ? 0.0 : left_.d2(-1.0 - r);
    }

    /// phi(r) = int_0^r sqrt(a). Exact for the constant family.
    double phi(double r) const
    {
        if (is_constant())
            return std::sqrt(poly_[0]) * r;
        return table_->value(r);
    }

    /// Derivative of the interpolant used by phi(); ~ sqrt(a(r)).
    double phi_prime(double r) const
    {
        if (is_constant())
            return std::sqrt(poly_[0]);
        return table_->derivative(r);
    }

    double phi_inverse(double s) const
    {
        if (is_constant())
            return s / std::sqrt(poly_[0]);
        return table_->inverse(s);
    }

    /// phi by direct adaptive quadrature (no table).
    double phi_quadrature(double r) const
    {
        return adaptive_simpson([this](double x) { return std::sqrt(a(x)); }, 0.0, r, 1e-12);
    }

private:
    CoefficientSpec(CoefficientFamily family, std::array<double, 3> coeffs) : family_(family), poly_(coeffs)
    {
        for (double c : poly_)
            if (!std::isfinite(c))
                throw std::invalid_argument("CoefficientSpec: non-finite parameter");
        // Hermite end values chosen so the blend degenerates to a quartic.
        const double p1 = poly(1.0), d1 = poly_[1] + 2.0 * poly_[2], s = 2.0 * poly_[2];
        const double pm = poly(-1.0), dm = poly_[1] - 2.0 * poly_[2];
        a_plus_ = p1 + 0.5 * d1 + s / 12.0;
        a_minus_ = pm - 0.5 * dm + s / 12.0;
        right_ = QuinticHermite(p1, d1, s, a_plus_, 0.0, 0.0);
        left_ = QuinticHermite(pm, -dm, s, a_minus_, 0.0, 0.0);

        a_low_ = std::numeric_limits<double>::infinity();
        a_high_ = -std::numeric_limits<double>::infinity();
        constexpr int samples = 10000;
        std::vector<double> at;
        for (int i = 0; i < samples; ++i)
            at.push_back(-2.5 + 5.0 * i / (samples - 1));
        // exact extremum candidates the sample grid would miss
        at.insert(at.end(), {-2.0, -1.0, 1.0, 2.0});
        if (poly_[2] != 0.0 && std::abs(poly_[1] / (2.0 * poly_[2])) <= 1.0)
            at.push_back(-poly_[1] / (2.0 * poly_[2]));
        for (double r : at) {
            const double v = a(r);
            a_low_ = std::min(a_low_, v);
            a_high_ = std::max(a_high_, v);
        }
        if (!(a_low_ > 0.0))
            throw NonPositiveCoefficient("CoefficientSpec: a(r) reaches " + std::to_string(a_low_) +
                                         " on [-2.5, 2.5]; a must stay positive");
        if (!is_constant())
            table_ = std::make_shared<const PhiTable>([this](double x) { return std::sqrt(a(x)); });
    }

    double poly(double r) const { return poly_[0] + r * (poly_[1] + r * poly_[2]); }

    CoefficientFamily family_;
    std::array<double, 3> poly_;
    double a_plus_ = 0.0, a_minus_ = 0.0;
    double a_low_ = 0.0, a_high_ = 0.0;
    QuinticHermite right_, left_;
    std::shared_ptr<const PhiTable> table_;
};

inline double coefficient_a(const CoefficientSpec& spec, double r) { return spec.a(r); }
inline double coefficient_aprime(const CoefficientSpec& spec, double r) { return spec.aprime(r); }
inline double coefficient_asecond(const CoefficientSpec& spec, double r) { return spec.asecond(r); }
inline double phi_transform(const CoefficientSpec& spec, double r) { return spec.phi(r); }
inline double phi_inverse(const CoefficientSpec& spec, double s) { return spec.phi_inverse(s); }

/// Pointwise z = phi(u).
inline Field phi_field(const Field& u, const CoefficientSpec& spec)
{
    return u.map([&](double r) { return spec.phi(r); });
}

/// Discrete free energy
///   int (delta/2)|Delta u|^2 + F(u)  +  (1/2) sum_faces |D phi(u)|^2,
/// the last term being the discrete form of int a(u)/2 |grad u|^2.
inline double energy(const Field& u, double delta, const PotentialSpec& potential, const CoefficientSpec& coefficient)
{
    double bulk = 0.0;
    for (double v : u.values())
        bulk += potential_F(potential, v);
    bulk *= u.domain().cell_volume();
    double sixth = 0.0;
    if (delta > 0.0) {
        const Field lap = laplacian(u);
        sixth = 0.5 * delta * inner(lap, lap);
    }
    const double grad = 0.5 * face_gradient_energy(phi_field(u, coefficient));
    return bulk + sixth + grad;
}

struct RegimeReport {
    bool convex_a = false;
    bool concave_a = false;
    double kappa = 0.0;
    bool unique_nonviscous = false;
    bool unique_viscous = false;
};

/// Samples a'' and (1/a)'' = (2 a'^2 - a a'') / a^3 on [-1, 1].
inline RegimeReport check_uniqueness_regime(const CoefficientSpec& spec)
{
    constexpr int samples = 10000;
    double min_a2 = std::numeric_limits<double>::infinity();
    double max_a2 = -std::numeric_limits<double>::infinity();
    double max_inv2 = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < samples; ++i) {
        const double r = -1.0 + 2.0 * i / (samples - 1);
        const double a = spec.a(r), a1 = spec.aprime(r), a2 = spec.asecond(r);
        min_a2 = std::min(min_a2, a2);
        max_a2 = std::max(max_a2, a2);
        max_inv2 = std::max(max_inv2, (2.0 * a1 * a1 - a * a2) / (a * a * a));
    }
    RegimeReport rep;
    rep.convex_a = min_a2 >= 0.0;
    rep.concave_a = max_a2 <= 0.0;
    rep.kappa = 0.0 - max_inv2;
    rep.unique_nonviscous = rep.convex_a && rep.kappa > 0.0;
    rep.unique_viscous = rep.convex_a && rep.kappa >= 0.0;
    return rep;
}

} // namespace nlch
