// stepper.hpp
// Implicit Euler time stepping with a matrix-free Newton-Krylov solve,
// step-size control and an explicit RK4 reference integrator.

#pragma once

#include "nlch/io.hpp"
#include "nlch/records.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <filesystem>
#include <functional>

namespace nlch {

/// Right preconditioner for the Newton-Krylov linear solves.
///  SparseLU: analytic Jacobian at the current iterate, factorised once per
///            Newton iteration.
///  Spectral: frozen constant coefficients, inverted by transforms.
enum class Preconditioner { SparseLU, Spectral };

struct StepperConfig {
    double tau = 1e-4;
    double t_end = 0.0;
    double newton_tol = 1e-10;
    int newton_max = 30;
    double krylov_tol = 1e-8;
    int krylov_max = 500;
    int krylov_restart = 30;
    double tau_min = 0.0; // 0 selects tau / 1024
    bool domain_guard = true;
    double accept_energy_slack = 1e-9;
    Preconditioner preconditioner = Preconditioner::SparseLU;

    double effective_tau_min() const { return tau_min > 0.0 ? tau_min : tau / 1024.0; }

    void validate() const
    {
        if (!(tau > 0.0))
            throw ValidationError({"tau"}, "tau must be > 0");
        if (!(t_end >= 0.0))
            throw ValidationError({"t_end"}, "t_end must be >= 0");
        if (!(newton_tol > 0.0) || !(krylov_tol > 0.0) || !(accept_energy_slack >= 0.0))
            throw ValidationError({"newton_tol", "krylov_tol", "energy_slack"}, "tolerances must be positive");
        if (newton_max < 1 || krylov_max < 1 || krylov_restart < 1)
            throw ValidationError({"newton_max", "krylov_max"}, "iteration limits must be >= 1");
        if (effective_tau_min() > tau)
            throw ValidationError({"tau_min", "tau"}, "tau_min must not exceed tau");
    }
};

struct StepReport {
    bool accepted = false;
    int newton_iters = 0;
    int krylov_iters_total = 0;
    double tau_used = 0.0;
    double energy_before = 0.0;
    double energy_after = 0.0;
    double dissipation_increment = 0.0;
    double residual = 0.0;        // final combined L2 residual
    double tolerance = 0.0;       // max(newton_tol, rounding floor)
    int retries = 0;
    int guard_trips = 0;
};

struct StepFailure : std::runtime_error {
    StepFailure(const std::string& what, double last_residual_, int guard_trips_, double tau_)
        : std::runtime_error(what), last_residual(last_residual_), guard_trips(guard_trips_), tau(tau_)
    {
    }
    double last_residual;
    int guard_trips;
    double tau;
};

struct Instability : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Energy plus the (sigma/2)||w||^2 term carried by the phase-field system;
/// non-increasing along exact trajectories.
inline double lyapunov(const SimState& s, const ModelParams& p, const PotentialSpec& pot)
{
    double e = energy(s.u, p.delta, pot, p.coefficient);
    if (p.sigma_pf() > 0.0)
        e += 0.5 * p.sigma_pf() * inner(s.w, s.w);
    return e;
}

/// Restarted GMRES with right preconditioning on R^n (Euclidean inner product).
/// Returns the iteration count; x holds the approximate solution of A x = b.
template <class ApplyA, class ApplyM>
int gmres(ApplyA&& A, ApplyM&& Minv, const std::vector<double>& b, std::vector<double>& x, double rel_tol,
          int max_iter, int restart)
{
    const std::size_t n = b.size();
    auto dot = [](const std::vector<double>& a, const std::vector<double>& c) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i)
            s += a[i] * c[i];
        return s;
    };
    const double bnorm = std::sqrt(dot(b, b));
    x.assign(n, 0.0);
    if (bnorm == 0.0)
        return 0;
    const double target = rel_tol * bnorm;
    int total = 0;
    std::vector<double> r = b;
    double beta = bnorm;
    while (total < max_iter) {
        const int m = std::min(restart, max_iter - total);
        std::vector<std::vector<double>> V(m + 1, std::vector<double>(n));
        std::vector<std::vector<double>> Z(m);
        std::vector<std::vector<double>> H(m + 1, std::vector<double>(m, 0.0));
        std::vector<double> cs(m), sn(m), g(m + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            V[0][i] = r[i] / beta;
        g[0] = beta;
        int k = 0;
        for (; k < m; ++k) {
            Z[k] = Minv(V[k]);
            std::vector<double> wv = A(Z[k]);
            for (int j = 0; j <= k; ++j) {
                H[j][k] = dot(wv, V[j]);
                for (std::size_t i = 0; i < n; ++i)
                    wv[i] -= H[j][k] * V[j][i];
            }
            H[k + 1][k] = std::sqrt(dot(wv, wv));
            if (H[k + 1][k] > 0.0)
                for (std::size_t i = 0; i < n; ++i)
                    V[k + 1][i] = wv[i] / H[k + 1][k];
            for (int j = 0; j < k; ++j) {
                const double t = cs[j] * H[j][k] + sn[j] * H[j + 1][k];
                H[j + 1][k] = -sn[j] * H[j][k] + cs[j] * H[j + 1][k];
                H[j][k] = t;
            }
            const double den = std::hypot(H[k][k], H[k + 1][k]);
            cs[k] = den == 0.0 ? 1.0 : H[k][k] / den;
            sn[k] = den == 0.0 ? 0.0 : H[k + 1][k] / den;
            H[k][k] = den;
            H[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            ++total;
            if (std::abs(g[k + 1]) <= target || H[k][k] == 0.0) {
                ++k;
                break;
            }
        }
        // back substitution on the k x k triangle
        std::vector<double> y(k, 0.0);
        for (int i = k - 1; i >= 0; --i) {
            double s = g[i];
            for (int j = i + 1; j < k; ++j)
                s -= H[i][j] * y[j];
            y[i] = H[i][i] != 0.0 ? s / H[i][i] : 0.0;
        }
        for (int j = 0; j < k; ++j)
            for (std::size_t i = 0; i < n; ++i)
                x[i] += y[j] * Z[j][i];
        const std::vector<double> ax = A(x);
        for (std::size_t i = 0; i < n; ++i)
            r[i] = b[i] - ax[i];
        const double previous = beta;
        beta = std::sqrt(dot(r, r));
        if (beta <= target)
            break;
        // a cycle that does not halve the true residual means the operator
        // (finite-difference products) is at its accuracy limit
        if (beta > 0.5 * previous)
            break;
    }
    return total;
}

/// Implicit Euler integrator for one ModelParams/StepperConfig pair.
class ImplicitStepper {
public:
    ImplicitStepper(ModelParams params, StepperConfig cfg)
        : p_(std::move(params)), cfg_(cfg), pot_(p_.effective_potential())
    {
        p_.validate(cfg_.domain_guard);
        cfg_.validate();
        guarded_ = pot_.singular() && !pot_.sigma();
    }

    const ModelParams& params() const { return p_; }
    const StepperConfig& config() const { return cfg_; }
    const PotentialSpec& potential() const { return pot_; }

    /// Consistent w for a state at rest (phase-field: w = 0).
    Field initial_w(const Field& u) const
    {
        if (p_.mode == Mode::PhaseField)
            return Field(u.domain(), 0.0);
        return chemical_potential(u, u, 1.0, p_, pot_);
    }

    SimState initial_state(const Field& u, double t = 0.0) const { return SimState{t, u, initial_w(u)}; }

    double lyapunov(const SimState& s) const { return nlch::lyapunov(s, p_, pot_); }

    /// Advances by cfg.tau (or less after retries).
    std::pair<SimState, StepReport> step(const SimState& s) const { return step(s, cfg_.tau); }

    std::pair<SimState, StepReport> step(const SimState& s, double tau_request) const
    {
        if (!s.u.all_finite() || !s.w.all_finite())
            throw std::invalid_argument("step: state is not finite");
        if (guarded_ && s.u.max_abs() >= 1.0)
            throw DomainViolation("step: max|u| >= 1 with an unregularised singular potential");
        StepReport rep;
        rep.energy_before = lyapunov(s);
        const double tau_min = std::min(cfg_.effective_tau_min(), tau_request);
        double tau = tau_request;
        double last_res = std::numeric_limits<double>::quiet_NaN();
        std::string reason = "no attempt";
        while (tau >= tau_min * (1.0 - 1e-12)) {
            Attempt a = solve(s, tau);
            rep.newton_iters += a.newton_iters;
            rep.krylov_iters_total += a.krylov_iters;
            rep.guard_trips += a.guard_trips;
            last_res = a.residual;
            if (a.converged) {
                const double e_after = lyapunov(a.state);
                const double slack = cfg_.accept_energy_slack * (1.0 + std::abs(rep.energy_before));
                if (e_after <= rep.energy_before + slack) {
                    rep.accepted = true;
                    rep.tau_used = tau;
                    rep.energy_after = e_after;
                    rep.residual = a.residual;
                    rep.tolerance = a.tolerance;
                    Field ut = a.state.u - s.u;
                    ut *= 1.0 / tau;
                    rep.dissipation_increment =
                        tau * (p_.mobility * face_gradient_energy(a.state.w) + p_.viscosity() * inner(ut, ut));
                    return {std::move(a.state), rep};
                }
                reason = "energy increase " + std::to_string(e_after - rep.energy_before);
            } else {
                reason = a.reason;
            }
            tau *= 0.5;
            ++rep.retries;
        }
        throw StepFailure("step: no acceptable step down to tau_min=" + std::to_string(tau_min) + " at t=" +
                              std::to_string(s.t) + " (last failure: " + reason +
                              ", residual=" + std::to_string(last_res) +
                              ", guard trips=" + std::to_string(rep.guard_trips) + ")",
                          last_res, rep.guard_trips, tau);
    }

private:
    struct Attempt {
        bool converged = false;
        SimState state;
        int newton_iters = 0;
        int krylov_iters = 0;
        int guard_trips = 0;
        double residual = 0.0;
        double tolerance = 0.0;
        std::string reason;
    };

    using Vec = std::vector<double>;

    static Vec pack(const Field& u, const Field& w)
    {
        Vec x(u.values());
        x.insert(x.end(), w.values().begin(), w.values().end());
        return x;
    }

    SimState unpack(const Vec& x, const Domain& dom, double t) const
    {
        const std::size_t n = dom.size();
        return SimState{t, Field(dom, Vec(x.begin(), x.begin() + n)), Field(dom, Vec(x.begin() + n, x.end()))};
    }

    bool violates_guard(const Vec& x, std::size_t n) const
    {
        if (!guarded_)
            return false;
        for (std::size_t i = 0; i < n; ++i)
            if (std::abs(x[i]) >= 1.0 - 1e-12)
                return true;
        return false;
    }

    Vec eval(const Vec& x, const SimState& prev, double tau) const
    {
        const SimState next = unpack(x, prev.u.domain(), prev.t + tau);
        auto [r1, r2] = residual(next, prev, tau, p_, pot_);
        return pack(r1, r2);
    }

    double norm(const Vec& v, const Domain& dom) const
    {
        double s = 0.0;
        for (double a : v)
            s += a * a;
        return std::sqrt(s * dom.cell_volume());
    }

    /// Bound on the rounding error of eval() at x, in the combined L2 norm.
    double rounding_floor(const Vec& x, const SimState& prev, double tau) const
    {
        const Domain& dom = prev.u.domain();
        const std::size_t n = dom.size();
        double lap_abs = 0.0;
        for (int d = 0; d < dom.dim(); ++d)
            lap_abs += 4.0 / (dom.spacing(d) * dom.spacing(d));
        double umax = 0.0, wmax = 0.0, zmax = 0.0, gmax = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            umax = std::max(umax, std::abs(x[i]));
            wmax = std::max(wmax, std::abs(x[n + i]));
        }
        if (p_.gradient_form == GradientForm::Variational) {
            zmax = std::max(std::abs(p_.coefficient.phi(umax)), std::abs(p_.coefficient.phi(-umax)));
            gmax = std::sqrt(p_.coefficient.a_high()) * lap_abs * zmax;
        } else {
            gmax = p_.coefficient.a_high() * lap_abs * umax * 2.0;
        }
        const double visc = p_.viscosity() / tau;
        const double spf = p_.sigma_pf() / tau;
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double s1 = (std::abs(x[i]) + std::abs(prev.u[i])) / tau +
                              spf * (std::abs(x[n + i]) + std::abs(prev.w[i])) + p_.mobility * lap_abs * wmax;
            double fval = 0.0;
            try {
                fval = std::abs(potential_f(pot_, x[i]));
            } catch (const DomainViolation&) {
            }
            const double s2 = std::abs(x[n + i]) + p_.delta * lap_abs * lap_abs * umax + gmax + fval +
                              visc * (std::abs(x[i]) + std::abs(prev.u[i]));
            s += s1 * s1 + s2 * s2;
        }
        return 8.0 * std::numeric_limits<double>::epsilon() * std::sqrt(s * dom.cell_volume());
    }

    /// Constant-coefficient linearisation, inverted mode by mode.
    Vec precondition(const Vec& r, const Field& u, double tau) const
    {
        const Domain& dom = u.domain();
        const std::size_t n = dom.size();
        auto basis = SpectralBasis::of(dom);
        double a_ref = 0.0, c_ref = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            a_ref += p_.coefficient.a(u[i]);
            try {
                c_ref += potential_fprime(pot_, u[i]);
            } catch (const DomainViolation&) {
            }
        }
        a_ref /= n;
        c_ref = std::max(0.0, c_ref / n);
        const Field r1(dom, Vec(r.begin(), r.begin() + n));
        const Field r2(dom, Vec(r.begin() + n, r.end()));
        auto c1 = basis->forward(r1);
        auto c2 = basis->forward(r2);
        const auto& mu = basis->eigenvalues();
        const double inv_tau = 1.0 / tau;
        const double spf = p_.sigma_pf() * inv_tau;
        const double visc = p_.viscosity() * inv_tau;
        for (std::size_t k = 0; k < n; ++k) {
            const double q = p_.delta * mu[k] * mu[k] + a_ref * mu[k] + c_ref + visc;
            const double b = spf + p_.mobility * mu[k];
            const double det = inv_tau + q * b;
            const double y1 = (c1[k] - b * c2[k]) / det;
            const double y2 = (q * c1[k] + c2[k] * inv_tau) / det;
            c1[k] = y1;
            c2[k] = y2;
        }
        return pack(basis->backward(c1), basis->backward(c2));
    }

    using SpMat = Eigen::SparseMatrix<double>;

    static SpMat laplacian_matrix(const Domain& dom)
    {
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(dom.size() * (1 + 2 * dom.dim()));
        detail::for_each_cell(dom, [&](std::size_t n, const std::array<int, 3>& idx) {
            for (int d = 0; d < dom.dim(); ++d) {
                const double ih2 = 1.0 / (dom.spacing(d) * dom.spacing(d));
                const int row = static_cast<int>(n);
                t.emplace_back(row, static_cast<int>(dom.neighbour(n, idx[d], d, -1)), ih2);
                t.emplace_back(row, static_cast<int>(dom.neighbour(n, idx[d], d, +1)), ih2);
                t.emplace_back(row, row, -2.0 * ih2);
            }
        });
        const int n = static_cast<int>(dom.size());
        SpMat L(n, n);
        L.setFromTriplets(t.begin(), t.end());
        return L;
    }

    static SpMat centred_matrix(const Domain& dom, int axis)
    {
        std::vector<Eigen::Triplet<double>> t;
        const double inv = 0.5 / dom.spacing(axis);
        detail::for_each_cell(dom, [&](std::size_t n, const std::array<int, 3>& idx) {
            const int row = static_cast<int>(n);
            t.emplace_back(row, static_cast<int>(dom.neighbour(n, idx[axis], axis, +1)), inv);
            t.emplace_back(row, static_cast<int>(dom.neighbour(n, idx[axis], axis, -1)), -inv);
        });
        const int n = static_cast<int>(dom.size());
        SpMat D(n, n);
        D.setFromTriplets(t.begin(), t.end());
        return D;
    }

    static SpMat diag(const std::vector<double>& v)
    {
        const int n = static_cast<int>(v.size());
        SpMat D(n, n);
        std::vector<Eigen::Triplet<double>> t;
        for (int i = 0; i < n; ++i)
            t.emplace_back(i, i, v[i]);
        D.setFromTriplets(t.begin(), t.end());
        return D;
    }

    /// d(chemical potential)/du at u, without the viscous and biharmonic parts.
    SpMat chemical_jacobian(const Field& u, const SpMat& L) const
    {
        const Domain& dom = u.domain();
        const std::size_t n = dom.size();
        const CoefficientSpec& c = p_.coefficient;
        std::vector<double> fp(n);
        for (std::size_t i = 0; i < n; ++i) {
            try {
                fp[i] = potential_fprime(pot_, u[i]);
            } catch (const DomainViolation&) {
                fp[i] = 1e12;
            }
        }
        SpMat J = diag(fp);
        if (p_.gradient_form == GradientForm::Variational) {
            // d[-phi'(u) L phi(u)] = -diag(phi''(u) L z) - diag(phi'(u)) L diag(phi'(u))
            const Field lapz = laplacian(phi_field(u, c));
            std::vector<double> d1(n), d2(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double a = c.a(u[i]);
                d1[i] = c.phi_prime(u[i]);
                d2[i] = -(c.aprime(u[i]) / (2.0 * std::sqrt(a))) * lapz[i];
            }
            const SpMat P = diag(d1);
            J += diag(d2);
            J -= SpMat(P * L * P);
        } else {
            const Field lapu = laplacian(u);
            const Field g2 = grad_sq(u);
            std::vector<double> dd(n), da(n);
            for (std::size_t i = 0; i < n; ++i) {
                dd[i] = -c.aprime(u[i]) * lapu[i] - 0.5 * c.asecond(u[i]) * g2[i];
                da[i] = c.a(u[i]);
            }
            J += diag(dd);
            J -= SpMat(diag(da) * L);
            for (int d = 0; d < dom.dim(); ++d) {
                const SpMat D = centred_matrix(dom, d);
                const Field pd = partial(u, d);
                std::vector<double> coef(n);
                for (std::size_t i = 0; i < n; ++i)
                    coef[i] = -c.aprime(u[i]) * pd[i];
                J += SpMat(diag(coef) * D);
            }
        }
        return J;
    }

    /// Factorised analytic Jacobian of (R1, R2) at u.
    std::function<Vec(const Vec&)> sparse_preconditioner(const Field& u, double tau) const
    {
        const Domain& dom = u.domain();
        const int n = static_cast<int>(dom.size());
        const SpMat L = laplacian_matrix(dom);
        SpMat J21 = chemical_jacobian(u, L);
        if (p_.delta > 0.0)
            J21 += p_.delta * SpMat(L * L);
        const double visc = p_.viscosity() / tau;
        const double spf = p_.sigma_pf() / tau;
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(static_cast<std::size_t>(2 * n + L.nonZeros() + J21.nonZeros() + n));
        for (int i = 0; i < n; ++i) {
            t.emplace_back(i, i, 1.0 / tau);
            t.emplace_back(n + i, n + i, 1.0);
            if (spf != 0.0)
                t.emplace_back(i, n + i, spf);
            if (visc != 0.0)
                t.emplace_back(n + i, i, -visc);
        }
        for (int k = 0; k < L.outerSize(); ++k)
            for (SpMat::InnerIterator it(L, k); it; ++it)
                t.emplace_back(static_cast<int>(it.row()), n + static_cast<int>(it.col()), -p_.mobility * it.value());
        for (int k = 0; k < J21.outerSize(); ++k)
            for (SpMat::InnerIterator it(J21, k); it; ++it)
                t.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()), -it.value());
        SpMat J(2 * n, 2 * n);
        J.setFromTriplets(t.begin(), t.end());
        J.makeCompressed();
        auto lu = std::make_shared<Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>>>();
        lu->compute(J);
        if (lu->info() != Eigen::Success)
            return [this, u, tau](const Vec& r) { return precondition(r, u, tau); };
        return [lu](const Vec& r) {
            const Eigen::Map<const Eigen::VectorXd> rv(r.data(), static_cast<Eigen::Index>(r.size()));
            const Eigen::VectorXd y = lu->solve(rv);
            return Vec(y.data(), y.data() + y.size());
        };
    }

    /// Restores the conserved mean exactly: mean(u) (+ sigma mean(w) in phase-field mode).
    void project_mass(Vec& x, const SimState& prev) const
    {
        const std::size_t n = prev.u.size();
        double su = 0.0, sw = 0.0, su0 = 0.0, sw0 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            su += x[i];
            sw += x[n + i];
            su0 += prev.u[i];
            sw0 += prev.w[i];
        }
        const double shift = ((su0 - su) + p_.sigma_pf() * (sw0 - sw)) / n;
        for (std::size_t i = 0; i < n; ++i)
            x[i] += shift;
    }

    Attempt solve(const SimState& prev, double tau) const
    {
        Attempt a;
        const Domain& dom = prev.u.domain();
        const std::size_t n = dom.size();
        Vec x = pack(prev.u, prev.w);
        Vec fx;
        try {
            fx = eval(x, prev, tau);
        } catch (const DomainViolation&) {
            a.reason = "domain violation at initial guess";
            ++a.guard_trips;
            return a;
        }
        double res = norm(fx, dom);
        for (int it = 0;; ++it) {
            const double tol = std::max(cfg_.newton_tol, rounding_floor(x, prev, tau));
            a.residual = res;
            a.tolerance = tol;
            if (!std::isfinite(res)) {
                a.reason = "non-finite residual";
                return a;
            }
            if (res <= tol) {
                a.converged = true;
                a.newton_iters = it;
                a.state = unpack(x, dom, prev.t + tau);
                return a;
            }
            if (it >= cfg_.newton_max) {
                a.reason = "Newton iteration limit";
                a.newton_iters = it;
                return a;
            }

            const Field u_cur(dom, Vec(x.begin(), x.begin() + n));
            const double xnorm = std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
            bool jv_failed = false;
            auto jv = [&](const Vec& v) {
                const double vnorm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
                Vec out(v.size(), 0.0);
                if (vnorm == 0.0)
                    return out;
                const double eta = 1e-7 * (1.0 + xnorm) / vnorm;
                auto probe = [&](double h) -> std::optional<Vec> {
                    Vec xp(x);
                    for (std::size_t i = 0; i < x.size(); ++i)
                        xp[i] += h * v[i];
                    try {
                        return eval(xp, prev, tau);
                    } catch (const DomainViolation&) {
                        return std::nullopt;
                    }
                };
                // central difference, one-sided near the edge of the potential's domain
                const auto fp = probe(eta);
                const auto fm = probe(-eta);
                if (fp && fm) {
                    for (std::size_t i = 0; i < out.size(); ++i)
                        out[i] = ((*fp)[i] - (*fm)[i]) / (2.0 * eta);
                    return out;
                }
                if (fp || fm) {
                    const double sgn = fp ? 1.0 : -1.0;
                    const Vec& f1 = fp ? *fp : *fm;
                    for (std::size_t i = 0; i < out.size(); ++i)
                        out[i] = sgn * (f1[i] - fx[i]) / eta;
                    return out;
                }
                jv_failed = true;
                return out;
            };
            std::function<Vec(const Vec&)> pc;
            if (cfg_.preconditioner == Preconditioner::SparseLU)
                pc = sparse_preconditioner(u_cur, tau);
            else
                pc = [&](const Vec& v) { return precondition(v, u_cur, tau); };
            Vec rhs(fx.size());
            for (std::size_t i = 0; i < fx.size(); ++i)
                rhs[i] = -fx[i];
            Vec dx;
            a.krylov_iters += gmres(jv, pc, rhs, dx, cfg_.krylov_tol, cfg_.krylov_max, cfg_.krylov_restart);
            if (jv_failed) {
                ++a.guard_trips;
                a.reason = "Jacobian probe left the potential domain";
                return a;
            }

            // backtracking on the residual norm
            double lambda = 1.0;
            bool moved = false;
            for (int ls = 0; ls < 10; ++ls, lambda *= 0.5) {
                Vec xt(x);
                for (std::size_t i = 0; i < x.size(); ++i)
                    xt[i] += lambda * dx[i];
                project_mass(xt, prev);
                if (violates_guard(xt, n)) {
                    ++a.guard_trips;
                    a.reason = "domain guard tripped";
                    a.newton_iters = it + 1;
                    return a;
                }
                Vec ft;
                try {
                    ft = eval(xt, prev, tau);
                } catch (const DomainViolation&) {
                    ++a.guard_trips;
                    a.reason = "domain violation during iteration";
                    a.newton_iters = it + 1;
                    return a;
                }
                const double rt = norm(ft, dom);
                if (std::isfinite(rt) && (rt < (1.0 - 1e-4 * lambda) * res || rt <= tol)) {
                    x = std::move(xt);
                    fx = std::move(ft);
                    res = rt;
                    moved = true;
                    break;
                }
            }
            if (!moved) {
                a.reason = "line search stalled";
                a.newton_iters = it + 1;
                a.residual = res;
                return a;
            }
        }
    }

    ModelParams p_;
    StepperConfig cfg_;
    PotentialSpec pot_;
    bool guarded_ = false;
};

/// One step with a throwaway stepper.
inline std::pair<SimState, StepReport> step(const SimState& s, const StepperConfig& cfg, const ModelParams& p)
{
    return ImplicitStepper(p, cfg).step(s);
}

struct RunOptions {
    int diagnostics_every = 1;
    /// Keep the recorded states (same cadence as diagnostics).
    bool keep_trajectory = true;
    /// Write a checkpoint every n accepted steps (0 = never) into checkpoint_dir.
    int checkpoint_every = 0;
    std::string checkpoint_dir;
    /// Called after every accepted step.
    std::function<void(const SimState&, long step_index)> on_step;
};

inline RunOptions record_every(int n, bool keep_trajectory = true)
{
    RunOptions o;
    o.diagnostics_every = n;
    o.keep_trajectory = keep_trajectory;
    return o;
}

struct RunResult {
    std::vector<SimState> trajectory;
    DiagnosticsSeries diagnostics;
    std::vector<StepReport> steps;
    SimState final_state;
    std::optional<std::string> failure;
    bool ok() const { return !failure; }
};

/// Integrates from `start` to cfg.t_end. A StepFailure stops the run and is
/// reported in RunResult::failure with everything computed so far.
inline RunResult run(const SimState& start, const StepperConfig& cfg, const ModelParams& params,
                     const RunOptions& opts = {})
{
    if (opts.diagnostics_every < 1)
        throw ValidationError({"diagnostics_every"}, "diagnostics_every must be >= 1");
    const ImplicitStepper stepper(params, cfg);
    RunResult out;
    out.diagnostics.mobility = params.mobility;
    out.diagnostics.viscosity = params.viscosity();
    out.diagnostics.sigma_pf = params.sigma_pf();
    SimState s = start;
    out.diagnostics.records.push_back(make_record(s, nullptr, 0.0, stepper.params(), stepper.potential(), 0));
    if (opts.keep_trajectory)
        out.trajectory.push_back(s);
    long index = 0;
    while (true) {
        const double remaining = cfg.t_end - s.t;
        if (remaining <= 1e-9 * cfg.tau)
            break;
        const double tau = remaining < cfg.tau * (1.0 + 1e-6) ? remaining : cfg.tau;
        std::pair<SimState, StepReport> res;
        try {
            res = stepper.step(s, tau);
        } catch (const StepFailure& e) {
            out.failure = e.what();
            break;
        }
        const Field u_prev = s.u;
        s = std::move(res.first);
        ++index;
        out.steps.push_back(res.second);
        const bool last = cfg.t_end - s.t <= 1e-9 * cfg.tau;
        if (index % opts.diagnostics_every == 0 || last) {
            out.diagnostics.records.push_back(make_record(s, &u_prev, res.second.tau_used, stepper.params(),
                                                          stepper.potential(), res.second.newton_iters));
            if (opts.keep_trajectory)
                out.trajectory.push_back(s);
        }
        if (opts.checkpoint_every > 0 && index % opts.checkpoint_every == 0) {
            std::filesystem::create_directories(opts.checkpoint_dir);
            char name[64];
            std::snprintf(name, sizeof name, "checkpoint_%08ld.chkp", index);
            write_checkpoint(Checkpoint{s.t, res.second.tau_used, s.u, s.w},
                             (std::filesystem::path(opts.checkpoint_dir) / name).string());
        }
        if (opts.on_step)
            opts.on_step(s, index);
    }
    out.final_state = s;
    return out;
}

inline RunResult run(const Field& initial, const StepperConfig& cfg, const ModelParams& params,
                     const RunOptions& opts = {})
{
    const ImplicitStepper stepper(params, cfg);
    return run(stepper.initial_state(initial), cfg, params, opts);
}

/// Right-hand side u_t of the (non-phase-field) flow, with the viscous
/// term inverted spectrally: (I - eps M Delta) u_t = M Delta w0(u).
inline Field explicit_rhs(const Field& u, const ModelParams& p, const PotentialSpec& pot)
{
    Field w = gradient_term(u, p);
    if (p.delta > 0.0)
        w.axpy(p.delta, biharmonic(u));
    for (std::size_t n = 0; n < w.size(); ++n)
        w[n] += potential_f(pot, u[n]);
    Field ut = laplacian(w);
    ut *= p.mobility;
    const double visc = p.viscosity();
    if (visc > 0.0) {
        auto basis = SpectralBasis::of(u.domain());
        ut = basis->apply(ut, [&](double mu, std::size_t) { return 1.0 / (1.0 + visc * p.mobility * mu); });
    }
    return ut;
}

/// Classical RK4 with a fixed step <= tau_tiny. Throws Instability on blow-up.
inline Field explicit_oracle(const Field& initial, double tau_tiny, double t_end, const ModelParams& p)
{
    if (p.mode == Mode::PhaseField)
        throw std::invalid_argument("explicit_oracle: phase-field mode is not supported");
    if (!(tau_tiny > 0.0) || !(t_end >= 0.0))
        throw std::invalid_argument("explicit_oracle: need tau_tiny > 0 and t_end >= 0");
    const PotentialSpec pot = p.effective_potential();
    const long steps = static_cast<long>(std::ceil(t_end / tau_tiny - 1e-9));
    if (steps == 0)
        return initial;
    const double dt = t_end / steps;
    const double limit = 1e6 * std::max(norm_l2(initial), 1e-300);
    Field u = initial;
    try {
        for (long s = 0; s < steps; ++s) {
            const Field k1 = explicit_rhs(u, p, pot);
            const Field k2 = explicit_rhs(Field(u).axpy(0.5 * dt, k1), p, pot);
            const Field k3 = explicit_rhs(Field(u).axpy(0.5 * dt, k2), p, pot);
            const Field k4 = explicit_rhs(Field(u).axpy(dt, k3), p, pot);
            for (std::size_t n = 0; n < u.size(); ++n)
                u[n] += dt / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
            if (!u.all_finite() || norm_l2(u) > limit)
                throw Instability("explicit_oracle: blow-up after " + std::to_string(s + 1) + " steps (dt=" +
                                  std::to_string(dt) + ")");
        }
    } catch (const DomainViolation& e) {
        throw Instability(std::string("explicit_oracle: ") + e.what());
    }
    return u;
}

/// Heuristic first step for explicit_oracle_auto.
inline double explicit_step_bound(const Domain& dom, const ModelParams& p)
{
    const double h = dom.min_spacing();
    if (p.mode == Mode::Sixth)
        return std::pow(h, 6) / (64.0 * p.delta * p.mobility);
    return std::pow(h, 4) * std::min(1.0, 1.0 / p.coefficient.a_high()) / (16.0 * p.mobility);
}

/// Runs explicit_oracle, halving the step from explicit_step_bound() until stable.
inline Field explicit_oracle_auto(const Field& initial, double t_end, const ModelParams& p, double* tau_used = nullptr)
{
    double tau = explicit_step_bound(initial.domain(), p);
    for (int attempt = 0; attempt < 30; ++attempt, tau *= 0.5) {
        try {
            Field u = explicit_oracle(initial, tau, t_end, p);
            if (tau_used)
                *tau_used = tau;
            return u;
        } catch (const Instability&) {
        }
    }
    throw Instability("explicit_oracle_auto: no stable step found");
}

} // namespace nlch
