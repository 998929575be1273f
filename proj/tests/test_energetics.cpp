#include "nlch/checks.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace nlch;

namespace {

// independent long-double evaluations of the logarithmic family
long double log_F(long double r) { return (1 - r) * std::log(1 - r) + (1 + r) * std::log(1 + r); }
long double log_f(long double r) { return std::log((1 + r) / (1 - r)); }

} // namespace

TEST(Potential, LogarithmicValuesAtZero)
{
    const auto p = PotentialSpec::logarithmic(0.0);
    EXPECT_EQ(potential_F(p, 0.0), 0.0);
    EXPECT_EQ(potential_f(p, 0.0), 0.0);
}

TEST(Potential, LogarithmicHalf)
{
    const auto p = PotentialSpec::logarithmic(0.0);
    EXPECT_NEAR(potential_f(p, 0.5), static_cast<double>(log_f(0.5L)), 1e-15);
    EXPECT_NEAR(potential_f(p, 0.5), 1.0986123, 1e-7);
    EXPECT_NEAR(potential_F(p, 0.5), static_cast<double>(log_F(0.5L)), 1e-15);
}

TEST(Potential, LogarithmicOddAndLambda)
{
    const auto p = PotentialSpec::logarithmic(2.5);
    for (int i = 1; i < 100; ++i) {
        const double r = 0.0099 * i;
        EXPECT_NEAR(potential_f(p, -r), -potential_f(p, r), 1e-14 * (1 + std::abs(potential_f(p, r))));
        EXPECT_NEAR(potential_F(p, r), static_cast<double>(log_F(r) - 1.25L * r * r), 1e-13);
        EXPECT_NEAR(potential_fprime(p, r), 2.0 / (1 - r * r) - 2.5, 1e-9 / (1 - r * r));
    }
}

TEST(Potential, DomainViolation)
{
    const auto p = PotentialSpec::logarithmic(1.0);
    EXPECT_THROW(potential_f(p, 1.0), DomainViolation);
    EXPECT_THROW(potential_F(p, -1.2), DomainViolation);
    // the regularised family is total
    const auto q = p.with_sigma(1e-2);
    EXPECT_NO_THROW(potential_f(q, 1.5));
    EXPECT_TRUE(std::isfinite(potential_F(q, -3.0)));
}

TEST(Potential, SixthPolynomial)
{
    const double h0 = 0.3;
    const double lam = PotentialSpec::min_convexifying_lambda(h0);
    const auto p = PotentialSpec::sixth_polynomial(h0, lam);
    for (double r : {-1.7, -0.4, 0.0, 0.9, 2.2}) {
        const double expect = (r + 1) * (r + 1) * (r * r + h0) * (r - 1) * (r - 1);
        EXPECT_NEAR(potential_F(p, r), expect, 1e-12 * (1 + expect));
        const double e = 1e-5;
        EXPECT_NEAR(potential_f(p, r), (potential_F(p, r + e) - potential_F(p, r - e)) / (2 * e), 1e-6 * (1 + std::abs(r)));
    }
    // lambda-convexity: F0 has non-negative second differences
    for (int i = 0; i < 400; ++i) {
        const double r = -3 + 0.015 * i, e = 1e-3;
        EXPECT_GE(p.F0(r + e) - 2 * p.F0(r) + p.F0(r - e), -1e-10);
    }
    EXPECT_THROW(PotentialSpec::sixth_polynomial(h0, 0.5 * lam), std::invalid_argument);
}

TEST(Yosida, LinearMonotonePartClosedForm)
{
    const auto p = PotentialSpec::linear(1.0);
    for (double s : {1.0, 0.3, 1e-2})
        for (double r : {-2.0, -0.3, 0.0, 0.7, 5.0}) {
            EXPECT_NEAR(resolvent(p, s, r).J, r / (1 + s), 1e-12 * (1 + std::abs(r)));
            EXPECT_NEAR(yosida_f(p, s, r), r / (1 + s), 1e-10 * (1 + std::abs(r)));
        }
}

TEST(Yosida, ZeroIsFixed)
{
    for (double s : {1.0, 1e-1, 1e-3, 1e-6}) {
        EXPECT_EQ(yosida_f(PotentialSpec::logarithmic(0.0), s, 0.0), 0.0);
        EXPECT_EQ(yosida_f(PotentialSpec::sixth_polynomial(1.0, PotentialSpec::min_convexifying_lambda(1.0)), s, 0.0), 0.0);
    }
}

TEST(Yosida, ResolventEquation)
{
    const auto p = PotentialSpec::logarithmic(0.0);
    for (double s : {1e-1, 1e-3})
        for (double r : {-4.0, -1.0, -0.2, 0.5, 0.999, 1.3}) {
            const Resolvent res = resolvent(p, s, r);
            ASSERT_LE(std::abs(res.J), 1.0);
            EXPECT_NEAR(res.J + s * res.f0J, r, 1e-9);
            // J may round to +-1 for large |r|, compare f0(J) only where it is resolvable
            if (std::abs(res.J) < 1 - 1e-6) {
                EXPECT_NEAR(res.f0J, static_cast<double>(log_f(res.J)), 1e-8 * (1 + std::abs(res.f0J)));
            }
        }
}

TEST(Yosida, ApproachesF0NearBoundary)
{
    const auto p = PotentialSpec::logarithmic(0.0);
    const double exact = static_cast<double>(log_f(0.999L));
    const double e2 = std::abs(yosida_f(p, 1e-2, 0.999) - exact);
    const double e4 = std::abs(yosida_f(p, 1e-4, 0.999) - exact);
    EXPECT_LT(e4, e2);
}

TEST(Yosida, MoreauDerivativeIsYosida)
{
    const auto p = PotentialSpec::logarithmic(0.0);
    for (double s : {1e-1, 1e-2})
        for (double r : {-1.5, -0.6, 0.2, 0.95, 1.8}) {
            const double e = 1e-6;
            const double fd = (moreau_F(p, s, r + e) - moreau_F(p, s, r - e)) / (2 * e);
            EXPECT_NEAR(fd, yosida_f(p, s, r), 1e-5 * (1 + std::abs(fd)));
            const double fd2 = (yosida_f(p, s, r + e) - yosida_f(p, s, r - e)) / (2 * e);
            EXPECT_NEAR(fd2, yosida_fprime(p, s, r), 1e-4 * (1 + std::abs(fd2)));
        }
}

TEST(Yosida, MalformedCustomPotentialFails)
{
    CustomPotential c;
    c.F0 = [](double r) { return r * r; };
    c.f0 = [](double r) { return r == 0.0 ? 0.0 : std::nan(""); };
    c.f0prime = [](double) { return 1.0; };
    const auto p = PotentialSpec::custom(c, 0.0);
    EXPECT_THROW(yosida_f(p, 0.1, 0.5), ResolventFailure);
}

TEST(Yosida, PropertySuiteSmall)
{
    YosidaSuiteOptions o;
    o.samples = 1000;
    for (const auto& r : yosida_property_suite(o))
        EXPECT_TRUE(r.passed) << r.property << ": " << r.detail;
}

TEST(Coefficient, ConstantFamily)
{
    const auto a = CoefficientSpec::constant(2.5);
    for (double r : {-4.0, -1.5, 0.0, 0.3, 1.0, 2.0, 7.0}) {
        EXPECT_EQ(a.a(r), 2.5);
        EXPECT_EQ(a.aprime(r), 0.0);
        EXPECT_EQ(a.asecond(r), 0.0);
        EXPECT_DOUBLE_EQ(a.phi(r), std::sqrt(2.5) * r);
    }
}

TEST(Coefficient, EvenQuadraticValue)
{
    const auto a = CoefficientSpec::even_quadratic(1.0, 0.5);
    EXPECT_DOUBLE_EQ(a.a(1.0), 1.5);
    EXPECT_DOUBLE_EQ(a.a(0.5), 1.125);
    EXPECT_EQ(a.a(3.0), a.a(2.0));
    EXPECT_EQ(a.a(-3.0), a.a(-2.0));
    EXPECT_EQ(a.a(2.0), a.a_plus());
    EXPECT_EQ(a.aprime(2.5), 0.0);
}

TEST(Coefficient, ExtensionIsC2)
{
    for (const auto& a : {CoefficientSpec::even_quadratic(1.0, 0.5), CoefficientSpec::general_quadratic(1.0, 0.3, -0.2),
                          CoefficientSpec::even_quadratic(0.2, -0.04)})
        for (double x : {-2.0, -1.0, 1.0, 2.0}) {
            const double e = 1e-8;
            EXPECT_LE(std::abs(a.a(x + e) - a.a(x - e)), 1e-6);
            EXPECT_LE(std::abs(a.aprime(x + e) - a.aprime(x - e)), 1e-6);
            EXPECT_LE(std::abs(a.asecond(x + e) - a.asecond(x - e)), 1e-6);
            // derivatives are consistent with values
            const double h = 1e-5;
            EXPECT_NEAR((a.a(x + 0.3 + h) - a.a(x + 0.3 - h)) / (2 * h), a.aprime(x + 0.3), 1e-6);
        }
}

TEST(Coefficient, PositivityBounds)
{
    const auto a = CoefficientSpec::general_quadratic(1.0, 0.5, 0.25);
    EXPECT_GT(a.a_low(), 0.0);
    for (int i = 0; i <= 1000; ++i) {
        const double r = -2.5 + 0.005 * i;
        EXPECT_GE(a.a(r), a.a_low() - 1e-12);
        EXPECT_LE(a.a(r), a.a_high() + 1e-12);
    }
    EXPECT_THROW(CoefficientSpec::constant(0.0), NonPositiveCoefficient);
    EXPECT_THROW(CoefficientSpec::even_quadratic(0.1, -0.5), NonPositiveCoefficient);
}

TEST(Phi, RoundtripAndQuadrature)
{
    const auto a = CoefficientSpec::even_quadratic(1.0, 0.8);
    for (int i = 0; i < 1000; ++i) {
        const double r = -2.0 + 4.0 * (i + 0.5) / 1000;
        EXPECT_NEAR(a.phi_inverse(a.phi(r)), r, 1e-10);
    }
    for (double r : {-2.4, -1.3, -0.5, 0.1, 0.77, 1.9})
        EXPECT_NEAR(a.phi(r), a.phi_quadrature(r), 1e-10);
    // closed form inside [-1, 1]: int_0^r sqrt(1 + c x^2) dx
    const double c = 0.8, r = 0.9;
    const double exact = 0.5 * (r * std::sqrt(1 + c * r * r) + std::asinh(std::sqrt(c) * r) / std::sqrt(c));
    EXPECT_NEAR(a.phi(r), exact, 1e-11);
}

TEST(Phi, BiLipschitz)
{
    const auto a = CoefficientSpec::general_quadratic(1.0, -0.4, 0.6);
    for (int i = 0; i < 500; ++i) {
        const double r = 2.5 * counter_uniform(3, i);
        const double s = 2.5 * counter_uniform(4, i);
        if (r == s)
            continue;
        const double q = std::abs(a.phi(r) - a.phi(s)) / std::abs(r - s);
        EXPECT_GE(q, std::sqrt(a.a_low()) * (1 - 1e-9));
        EXPECT_LE(q, std::sqrt(a.a_high()) * (1 + 1e-9));
    }
}

TEST(Energy, ConstantField)
{
    const Domain d(2, {8, 8, 1}, {1.0, 2.0, 1.0}, Boundary::NoFlux);
    const auto p = PotentialSpec::logarithmic(3.0);
    const auto a = CoefficientSpec::even_quadratic(1.0, 0.5);
    EXPECT_NEAR(energy(Field(d, 0.3), 1e-3, p, a), 2.0 * potential_F(p, 0.3), 1e-14);
    EXPECT_EQ(energy(Field(d, 0.0), 0.0, PotentialSpec::logarithmic(0.0), a), 0.0);
}

TEST(Energy, GradientTermOfCosine)
{
    // (1/2)|grad u|^2 for cos(pi x / L): (pi/L)^2 L / 4
    const double L = 1.0;
    double errs[2];
    int k = 0;
    for (int n : {64, 256}) {
        const Domain d = Domain::line(n, L);
        const Field u = Field::from_function(d, [&](double x, double, double) { return std::cos(M_PI * x / L); });
        const double e = energy(u, 0.0, PotentialSpec::linear(0.0), CoefficientSpec::constant(1.0));
        errs[k++] = std::abs(e - M_PI * M_PI / (4 * L));
    }
    EXPECT_LE(errs[1], 1e-3);
    EXPECT_GT(std::log(errs[0] / errs[1]) / std::log(4.0), 1.8);
}

TEST(Energy, RaisesDomainViolation)
{
    const Domain d = Domain::line(8);
    Field u(d, 0.2);
    u[3] = 1.0;
    EXPECT_THROW(energy(u, 0.0, PotentialSpec::logarithmic(1.0), CoefficientSpec::constant(1.0)), DomainViolation);
}

TEST(Regime, Constant)
{
    const auto r = check_uniqueness_regime(CoefficientSpec::constant(3.0));
    EXPECT_TRUE(r.convex_a);
    EXPECT_EQ(r.kappa, 0.0);
    EXPECT_TRUE(r.unique_viscous);
    EXPECT_FALSE(r.unique_nonviscous);
}

TEST(Regime, EvenQuadraticOneOne)
{
    const auto a = CoefficientSpec::even_quadratic(1.0, 1.0);
    auto inv2 = [&](double u) {
        const double v = a.a(u), d = a.aprime(u), s = a.asecond(u);
        return (2 * d * d - v * s) / (v * v * v);
    };
    EXPECT_NEAR(inv2(1.0), 0.5, 1e-12);
    EXPECT_NEAR(inv2(0.0), -2.0, 1e-12);
    const auto r = check_uniqueness_regime(a);
    EXPECT_FALSE(r.unique_viscous);
    EXPECT_NEAR(r.kappa, -0.5, 1e-9);
}

TEST(Regime, ConvexWithConcaveReciprocal)
{
    // a = g0 + g2 u^2 with 3 g2 < g0: (1/a)'' = 2 g2 (3 g2 u^2 - g0) / a^3 < 0
    const auto r = check_uniqueness_regime(CoefficientSpec::even_quadratic(1.0, 0.2));
    EXPECT_TRUE(r.convex_a);
    EXPECT_NEAR(r.kappa, -2 * 0.2 * (3 * 0.2 - 1) / std::pow(1.2, 3), 1e-9);
    EXPECT_TRUE(r.unique_nonviscous);
}
