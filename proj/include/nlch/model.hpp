// model.hpp
// Chemical potential and implicit-Euler residuals for the sixth-order,
// fourth-order and phase-field systems; initial data.

#pragma once

#include "nlch/energetics.hpp"
#include "nlch/spectral.hpp"

#include <cstdint>
#include <variant>

namespace nlch {

enum class Mode { Sixth, Fourth, PhaseField };

/// How the a(u)-dependent term of the chemical potential is discretised.
///  Variational: -phi'(u) Delta phi(u), the exact gradient of energy().
///  Pointwise:   -a(u) Delta u - a'(u)/2 |grad u|^2 with centred gradients.
enum class GradientForm { Variational, Pointwise };

/// Invalid parameter combination; `keys` names the offending settings.
struct ValidationError : std::invalid_argument {
    ValidationError(std::vector<std::string> k, const std::string& what)
        : std::invalid_argument(what), keys(std::move(k))
    {
    }
    std::vector<std::string> keys;
};

struct ModelParams {
    double delta = 0.0;
    double epsilon = 0.0;
    double sigma = 0.0;
    double mobility = 1.0;
    Mode mode = Mode::Fourth;
    PotentialSpec potential = PotentialSpec::logarithmic(0.0);
    CoefficientSpec coefficient;
    GradientForm gradient_form = GradientForm::Variational;

    double lambda() const { return potential.lambda(); }

    /// Viscosity multiplying u_t in the chemical potential.
    double viscosity() const { return epsilon + (mode == Mode::Fourth ? 0.0 : sigma); }

    /// Coefficient of w_t in the mass balance (phase-field system only).
    double sigma_pf() const { return mode == Mode::PhaseField ? sigma : 0.0; }

    /// Potential with the Moreau-Yosida parameter taken from `sigma`.
    PotentialSpec effective_potential() const
    {
        return potential.with_sigma(sigma > 0.0 ? std::optional<double>(sigma) : std::nullopt);
    }

    void validate(bool domain_guard = true) const
    {
        if (!(delta >= 0.0))
            throw ValidationError({"delta"}, "delta must be >= 0");
        if (!(epsilon >= 0.0))
            throw ValidationError({"epsilon"}, "epsilon must be >= 0");
        if (!(sigma >= 0.0) || sigma > 1.0)
            throw ValidationError({"sigma"}, "sigma must lie in [0, 1]");
        if (!(mobility > 0.0))
            throw ValidationError({"mobility"}, "mobility must be > 0");
        if (mode == Mode::Sixth && !(delta > 0.0))
            throw ValidationError({"mode", "delta"}, "mode=sixth requires delta > 0");
        if (mode != Mode::Sixth && delta != 0.0)
            throw ValidationError({"mode", "delta"}, "fourth-order and phase-field modes require delta = 0");
        if (mode == Mode::PhaseField && !(sigma > 0.0))
            throw ValidationError({"mode", "sigma"}, "mode=phasefield requires sigma > 0");
        if (sigma == 0.0 && potential.singular() && !domain_guard)
            throw ValidationError({"sigma", "domain_guard"},
                                  "a singular potential with sigma = 0 needs the stepper domain guard");
    }
};

struct SimState {
    double t = 0.0;
    Field u;
    Field w;
};

/// -a(u) Delta u - a'(u)/2 |grad u|^2, evaluated pointwise.
inline Field calA(const Field& u, const CoefficientSpec& coef)
{
    const Field lap = laplacian(u);
    const Field g2 = grad_sq(u);
    Field out(u.domain());
    for (std::size_t n = 0; n < u.size(); ++n)
        out[n] = -coef.a(u[n]) * lap[n] - 0.5 * coef.aprime(u[n]) * g2[n];
    return out;
}

/// -phi'(u) Delta phi(u): same continuum operator, written as the gradient
/// of (1/2) sum_faces |D phi(u)|^2.
inline Field calA_variational(const Field& u, const CoefficientSpec& coef)
{
    const Field lapz = laplacian(phi_field(u, coef));
    Field out(u.domain());
    for (std::size_t n = 0; n < u.size(); ++n)
        out[n] = -coef.phi_prime(u[n]) * lapz[n];
    return out;
}

inline Field gradient_term(const Field& u, const ModelParams& p)
{
    return p.gradient_form == GradientForm::Variational ? calA_variational(u, p.coefficient) : calA(u, p.coefficient);
}

/// Chemical potential with the given effective potential (avoids rebuilding it per call).
inline Field chemical_potential(const Field& u_new, const Field& u_old, double tau, const ModelParams& p,
                                const PotentialSpec& pot)
{
    if (!(tau > 0.0))
        throw std::invalid_argument("chemical_potential: tau must be positive");
    Field w = gradient_term(u_new, p);
    if (p.delta > 0.0)
        w.axpy(p.delta, biharmonic(u_new));
    const double visc = p.viscosity() / tau;
    for (std::size_t n = 0; n < w.size(); ++n) {
        w[n] += potential_f(pot, u_new[n]);
        if (visc != 0.0)
            w[n] += visc * (u_new[n] - u_old[n]);
    }
    return w;
}

/// w = delta Delta^2 u + A(u) + f_sigma(u) - lambda u + (eps + sigma_visc) (u - u_old)/tau.
inline Field chemical_potential(const Field& u_new, const Field& u_old, double tau, const ModelParams& p)
{
    return chemical_potential(u_new, u_old, tau, p, p.effective_potential());
}

inline std::pair<Field, Field> residual(const SimState& next, const SimState& prev, double tau, const ModelParams& p,
                                        const PotentialSpec& pot)
{
    if (next.u.domain() != prev.u.domain())
        throw std::invalid_argument("residual: states live on different domains");
    if (!(tau > 0.0))
        throw std::invalid_argument("residual: tau must be positive");
    Field r1 = laplacian(next.w);
    r1 *= -p.mobility;
    const double inv_tau = 1.0 / tau;
    const double spf = p.sigma_pf() * inv_tau;
    for (std::size_t n = 0; n < r1.size(); ++n) {
        r1[n] += (next.u[n] - prev.u[n]) * inv_tau;
        if (spf != 0.0)
            r1[n] += spf * (next.w[n] - prev.w[n]);
    }
    Field r2 = next.w;
    r2 -= chemical_potential(next.u, prev.u, tau, p, pot);
    return {std::move(r1), std::move(r2)};
}

/// (R1, R2) of one implicit Euler step; the step is the root of both.
inline std::pair<Field, Field> residual(const SimState& next, const SimState& prev, double tau, const ModelParams& p)
{
    return residual(next, prev, tau, p, p.effective_potential());
}

/// Elliptic smoothing: order 1 solves (I - sigma Delta) v = u0, order 2
/// solves (I + sigma Delta^2) v = u0. The mean mode passes through untouched.
inline Field smooth_initial_datum(const Field& u0, double sigma, int order)
{
    if (!(sigma > 0.0))
        throw std::invalid_argument("smooth_initial_datum: sigma must be positive");
    if (order != 1 && order != 2)
        throw std::invalid_argument("smooth_initial_datum: order must be 1 or 2");
    auto basis = SpectralBasis::of(u0.domain());
    return basis->apply(u0, [&](double mu, std::size_t n) {
        if (n == 0)
            return 1.0;
        return 1.0 / (1.0 + sigma * (order == 1 ? mu : mu * mu));
    });
}

struct MeanOutOfRange : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct AmplitudeTooLarge : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

namespace init {

struct Constant {
    double mean = 0.0;
};
/// Mean plus uniform noise in [-amplitude, amplitude], recentred to the mean.
struct SeededNoise {
    double mean = 0.0;
    double amplitude = 0.05;
    std::uint64_t seed = 0;
};
/// Mean plus amplitude * cos(k pi x / L) (NoFlux) or cos(2 k pi x / L)
/// (Periodic) along axis 0.
struct CosineMode {
    double mean = 0.0;
    double amplitude = 0.1;
    int k = 1;
};
/// (1 - 2 margin) tanh((x - position) / width) along axis 0.
struct TanhInterface {
    double position = 0.5;
    double width = 0.05;
};

} // namespace init

using InitialKind = std::variant<init::Constant, init::SeededNoise, init::CosineMode, init::TanhInterface>;

/// Counter-based generator: SplitMix64 finaliser applied to (seed, index).
inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Uniform in [-1, 1), a pure function of (seed, index).
inline double counter_uniform(std::uint64_t seed, std::uint64_t index)
{
    const std::uint64_t bits = splitmix64(splitmix64(seed) ^ (index * 0xD1B54A32D192ED03ULL + 1));
    return 2.0 * static_cast<double>(bits >> 11) * 0x1.0p-53 - 1.0;
}

/// Builds a deterministic initial field. With `singular`, max|u| must stay
/// below 1 - margin.
inline Field make_initial(const InitialKind& kind, const Domain& dom, bool singular = true, double margin = 1e-3)
{
    Field u(dom);
    double target_mean = 0.0;
    std::visit(
        [&](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, init::Constant>) {
                target_mean = k.mean;
                u = Field(dom, k.mean);
            } else if constexpr (std::is_same_v<K, init::SeededNoise>) {
                target_mean = k.mean;
                for (std::size_t n = 0; n < u.size(); ++n)
                    u[n] = k.amplitude * counter_uniform(k.seed, n);
                const double shift = k.mean - mean(u);
                u += shift;
            } else if constexpr (std::is_same_v<K, init::CosineMode>) {
                target_mean = k.mean;
                const double L = dom.length(0);
                const double freq = (dom.bc() == Boundary::NoFlux ? M_PI : 2.0 * M_PI) * k.k / L;
                u = Field::from_function(dom, [&](double x, double, double) {
                    return k.mean + k.amplitude * std::cos(freq * x);
                });
            } else {
                u = Field::from_function(dom, [&](double x, double, double) {
                    return (1.0 - 2.0 * margin) * std::tanh((x - k.position) / k.width);
                });
                target_mean = mean(u);
            }
        },
        kind);
    if (!(std::abs(target_mean) < 1.0))
        throw MeanOutOfRange("make_initial: mean " + std::to_string(target_mean) + " outside (-1, 1)");
    if (!u.all_finite())
        throw std::invalid_argument("make_initial: non-finite values");
    if (singular && u.max_abs() > 1.0 - margin)
        throw AmplitudeTooLarge("make_initial: max|u| = " + std::to_string(u.max_abs()) + " exceeds 1 - " +
                                std::to_string(margin));
    return u;
}

} // namespace nlch
