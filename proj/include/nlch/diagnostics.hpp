// diagnostics.hpp
// Verification studies on top of the stepper: energy balance, the
// Dal Passo-Garcke-Gruen identity, linear dispersion, parameter ladders
// and two-trajectory contraction.

#pragma once

#include "nlch/stepper.hpp"

#include <future>
#include <ostream>

namespace nlch {

/// Everything needed to reproduce one run.
struct Scenario {
    Domain domain = Domain::line(64);
    ModelParams params;
    StepperConfig stepper;
    InitialKind initial = init::Constant{0.0};
    int diagnostics_every = 1;

    Field initial_field() const { return make_initial(initial, domain, params.potential.singular()); }
};

/// |E(t) - E(0) + int_0^t (M |grad w|^2 + visc |u_t|^2)| per record, the
/// integral by the trapezoid rule over the recorded times. For the
/// phase-field system E includes (sigma/2)|w|^2.
inline std::vector<double> energy_equality_residual(const DiagnosticsSeries& series)
{
    const auto& rec = series.records;
    std::vector<double> out;
    if (rec.empty())
        return out;
    auto lyap = [&](const DiagnosticsRecord& r) { return r.energy + 0.5 * series.sigma_pf * r.w_sq; };
    // u_t has no backward difference at t = 0; reuse the first available one.
    auto dissipation = [&](std::size_t k) {
        const double ut = (k == 0 && rec.size() > 1) ? rec[1].ut_sq : rec[k].ut_sq;
        return series.mobility * rec[k].grad_w_sq + series.viscosity * ut;
    };
    const double e0 = lyap(rec[0]);
    double integral = 0.0;
    out.push_back(0.0);
    for (std::size_t k = 1; k < rec.size(); ++k) {
        integral += 0.5 * (rec[k].t - rec[k - 1].t) * (dissipation(k - 1) + dissipation(k));
        out.push_back(std::abs(lyap(rec[k]) - e0 + integral));
    }
    return out;
}

/// |int h'(z)|grad z|^2 Lap z + 1/3 int h''(z)|grad z|^4 - 2/3 int h(z)(|D^2 z|^2 - |Lap z|^2)|.
/// The boundary term is absent: exact for Periodic, flat faces for NoFlux.
inline double dpgg_identity_residual(const Field& z, const std::function<double(double)>& h,
                                     const std::function<double(double)>& hp,
                                     const std::function<double(double)>& hpp)
{
    const Domain& dom = z.domain();
    const Field lap = laplacian(z);
    const Field g2 = grad_sq(z);
    Field hess(dom);
    for (int a = 0; a < dom.dim(); ++a)
        for (int b = 0; b < dom.dim(); ++b) {
            const Field d = second_partial(z, a, b);
            for (std::size_t n = 0; n < d.size(); ++n)
                hess[n] += d[n] * d[n];
        }
    Field integrand(dom);
    for (std::size_t n = 0; n < z.size(); ++n) {
        const double zn = z[n];
        integrand[n] = hp(zn) * g2[n] * lap[n] + hpp(zn) * g2[n] * g2[n] / 3.0 -
                       2.0 / 3.0 * h(zn) * (hess[n] - lap[n] * lap[n]);
    }
    return std::abs(integrate(integrand));
}

struct NonlinearSpec : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DispersionRow {
    int mode = 0;
    double k = 0.0;        // sqrt of the discrete -Laplacian eigenvalue
    double mu_numeric = 0.0;
    double mu_analytic = 0.0;
    double rel_err = 0.0;
};

/// mu = -M k^2 (delta k^4 + a0 k^2 + lambda0) / (1 + eps M k^2), k^2 the
/// eigenvalue of -Delta_h for cos(mode pi x / L) along axis 0.
inline double dispersion_mu(const Domain& dom, const ModelParams& p, int mode)
{
    const auto slope = p.potential.linear_slope();
    if (!p.coefficient.is_constant() || !slope)
        throw NonlinearSpec("dispersion_check: requires constant a and a linear potential");
    const double a0 = p.coefficient.a(0.0);
    const double lambda0 = *slope - p.potential.lambda();
    const double h = dom.spacing(0);
    const int n = dom.cells(0);
    const double s = dom.bc() == Boundary::NoFlux ? std::sin(M_PI * mode / (2.0 * n)) : std::sin(M_PI * mode / n);
    const double k2 = 4.0 / (h * h) * s * s;
    const double visc = p.viscosity();
    return -p.mobility * k2 * (p.delta * k2 * k2 + a0 * k2 + lambda0) / (1.0 + visc * p.mobility * k2);
}

/// Decay rate of single cosine modes, fitted from the log-amplitude of an
/// implicit run with tau = tau_scale / |mu|. The implicit Euler bias is
/// about tau |mu| / 2 relative.
inline std::vector<DispersionRow> dispersion_check(const Domain& dom, const ModelParams& p,
                                                   const std::vector<int>& modes = {1, 2, 3},
                                                   double tau_scale = 1e-3, double amplitude = 1e-3)
{
    std::vector<DispersionRow> rows;
    for (int m : modes) {
        DispersionRow row;
        row.mode = m;
        row.mu_analytic = dispersion_mu(dom, p, m);
        {
            const double h = dom.spacing(0);
            const int n = dom.cells(0);
            const double s =
                dom.bc() == Boundary::NoFlux ? std::sin(M_PI * m / (2.0 * n)) : std::sin(M_PI * m / n);
            row.k = 2.0 / h * std::abs(s);
        }
        if (m == 0 || row.mu_analytic == 0.0) {
            rows.push_back(row);
            continue;
        }
        const double rate = std::abs(row.mu_analytic);
        StepperConfig cfg;
        cfg.tau = tau_scale / rate;
        cfg.t_end = 1.0 / rate;
        const Field mode_shape = make_initial(init::CosineMode{0.0, 1.0, m}, dom, false);
        const double norm2 = inner(mode_shape, mode_shape);
        const RunResult res = run(amplitude * mode_shape, cfg, p, record_every(1));
        if (!res.ok())
            throw StepFailure("dispersion_check: " + *res.failure, 0.0, 0, cfg.tau);
        // least-squares slope of log amplitude against t
        double st = 0, sy = 0, stt = 0, sty = 0;
        const double cnt = static_cast<double>(res.trajectory.size());
        for (const auto& s : res.trajectory) {
            const double y = std::log(std::abs(inner(s.u, mode_shape) / norm2));
            st += s.t;
            sy += y;
            stt += s.t * s.t;
            sty += s.t * y;
        }
        row.mu_numeric = (cnt * sty - st * sy) / (cnt * stt - st * st);
        row.rel_err = std::abs(row.mu_numeric - row.mu_analytic) / rate;
        rows.push_back(row);
    }
    return rows;
}

/// Least-squares slope of log y against log x, skipping non-positive entries.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0))
            continue;
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    const double den = n * sxx - sx * sx;
    if (n < 2 || den == 0.0)
        return std::numeric_limits<double>::quiet_NaN();
    return (n * sxy - sx * sy) / den;
}

struct ConvergenceReport {
    std::string parameter;
    std::vector<double> ladder;
    std::vector<double> distances_l2; // between ladder[i] and ladder[i+1]
    std::vector<double> distances_h1;
    double observed_order = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> observed_order_cum; // fit over the first i+1 distances
    std::vector<double> overshoot;          // max over the run of max(|u|-1, 0), per ladder entry
    std::vector<DiagnosticsSeries> series;
};

struct SweepFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline double h1_norm(const Field& f)
{
    const double l2 = norm_l2(f), semi = seminorm_h1(f);
    return std::sqrt(l2 * l2 + semi * semi);
}

struct LadderRun {
    Field u_end;
    DiagnosticsSeries series;
    double overshoot = 0.0;
};

inline LadderRun run_entry(const Scenario& sc, const std::string& label)
{
    Field u0 = sc.initial_field();
    RunOptions opts;
    opts.diagnostics_every = sc.diagnostics_every;
    opts.keep_trajectory = false;
    double worst = std::max(u0.max_abs() - 1.0, 0.0);
    opts.on_step = [&](const SimState& s, long) { worst = std::max(worst, s.u.max_abs() - 1.0); };
    sc.params.validate(sc.stepper.domain_guard);
    RunResult r = run(u0, sc.stepper, sc.params, opts);
    if (!r.ok())
        throw SweepFailure(label + ": " + *r.failure);
    return LadderRun{r.final_state.u, std::move(r.diagnostics), worst};
}

inline ConvergenceReport run_ladder(const std::string& name, const std::vector<double>& ladder,
                                    const std::function<Scenario(double)>& make,
                                    const std::function<double(double)>& abscissa, bool parallel)
{
    if (ladder.empty())
        throw std::invalid_argument(name + ": empty ladder");
    std::vector<Scenario> scenarios;
    for (double v : ladder)
        scenarios.push_back(make(v));
    auto label = [&](std::size_t i) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%s: ladder entry %zu (%g)", name.c_str(), i, ladder[i]);
        return std::string(buf);
    };
    std::vector<LadderRun> runs;
    if (parallel) {
        std::vector<std::future<LadderRun>> jobs;
        for (std::size_t i = 0; i < ladder.size(); ++i)
            jobs.push_back(std::async(std::launch::async, [&, i] { return run_entry(scenarios[i], label(i)); }));
        for (auto& j : jobs)
            runs.push_back(j.get());
    } else {
        for (std::size_t i = 0; i < ladder.size(); ++i)
            runs.push_back(run_entry(scenarios[i], label(i)));
    }
    ConvergenceReport rep;
    rep.parameter = name;
    rep.ladder = ladder;
    std::vector<double> xs;
    for (std::size_t i = 0; i + 1 < runs.size(); ++i) {
        const Field d = runs[i].u_end - runs[i + 1].u_end;
        rep.distances_l2.push_back(norm_l2(d));
        rep.distances_h1.push_back(h1_norm(d));
        xs.push_back(abscissa(ladder[i]));
        rep.observed_order_cum.push_back(loglog_slope(xs, rep.distances_l2));
    }
    rep.observed_order = loglog_slope(xs, rep.distances_l2);
    for (auto& r : runs) {
        rep.overshoot.push_back(r.overshoot);
        rep.series.push_back(std::move(r.series));
    }
    return rep;
}

} // namespace detail

/// Sixth-order runs along a delta ladder. With `require_concave` the
/// coefficient must satisfy a'' <= 0 on [-1, 1], the regime in which the
/// delta -> 0 limit is known to hold.
inline ConvergenceReport sweep_delta(const Scenario& base, const std::vector<double>& ladder,
                                     bool require_concave = true, bool parallel = true)
{
    if (require_concave && !check_uniqueness_regime(base.params.coefficient).concave_a)
        throw ValidationError({"coefficient"}, "sweep_delta: a must be concave on [-1, 1]");
    for (double d : ladder)
        if (!(d > 0.0))
            throw ValidationError({"delta"}, "sweep_delta: ladder entries must be > 0");
    return detail::run_ladder(
        "delta", ladder,
        [&](double d) {
            Scenario s = base;
            s.params.mode = Mode::Sixth;
            s.params.delta = d;
            return s;
        },
        [](double d) { return d; }, parallel);
}

/// Runs along a ladder of Yosida parameters; `overshoot` collects the
/// largest max(|u| - 1, 0) seen along each run.
inline ConvergenceReport sweep_sigma(const Scenario& base, const std::vector<double>& ladder, bool parallel = true)
{
    for (double s : ladder)
        if (!(s > 0.0) || s > 1.0)
            throw ValidationError({"sigma"}, "sweep_sigma: ladder entries must lie in (0, 1]");
    return detail::run_ladder(
        "sigma", ladder,
        [&](double v) {
            Scenario s = base;
            s.params.sigma = v;
            return s;
        },
        [](double v) { return v; }, parallel);
}

/// Averages 2^dim fine cells onto each coarse cell.
inline Field restrict_by_averaging(const Field& fine, const Domain& coarse)
{
    const Domain& fd = fine.domain();
    for (int d = 0; d < coarse.dim(); ++d)
        if (fd.cells(d) != 2 * coarse.cells(d))
            throw std::invalid_argument("restrict_by_averaging: grids are not a factor 2 apart");
    Field out(coarse);
    const double w = 1.0 / static_cast<double>(1 << coarse.dim());
    for (std::size_t n = 0; n < fine.size(); ++n) {
        const auto idx = fd.unflatten(n);
        std::size_t m = 0;
        for (int d = 0; d < coarse.dim(); ++d)
            m += static_cast<std::size_t>(idx[d] / 2) * coarse.stride(d);
        out[m] += w * fine[n];
    }
    return out;
}

/// Mesh refinement: `levels` runs at n, 2n, 4n, ... cells per axis;
/// successive solutions are compared on the coarser grid. The ladder holds h.
inline ConvergenceReport refine(const Scenario& base, int levels, bool parallel = true)
{
    if (levels < 2)
        throw std::invalid_argument("refine: need at least 2 levels");
    std::vector<Domain> doms;
    for (int l = 0; l < levels; ++l) {
        std::array<int, 3> cells = base.domain.cells();
        for (int d = 0; d < base.domain.dim(); ++d)
            cells[d] <<= l;
        doms.emplace_back(base.domain.dim(), cells, base.domain.lengths(), base.domain.bc());
    }
    std::vector<detail::LadderRun> runs(levels);
    auto job = [&](int l) {
        Scenario s = base;
        s.domain = doms[l];
        return detail::run_entry(s, "refine: level " + std::to_string(l));
    };
    if (parallel) {
        std::vector<std::future<detail::LadderRun>> jobs;
        for (int l = 0; l < levels; ++l)
            jobs.push_back(std::async(std::launch::async, job, l));
        for (int l = 0; l < levels; ++l)
            runs[l] = jobs[l].get();
    } else {
        for (int l = 0; l < levels; ++l)
            runs[l] = job(l);
    }
    ConvergenceReport rep;
    rep.parameter = "h";
    for (int l = 0; l < levels; ++l)
        rep.ladder.push_back(doms[l].min_spacing());
    for (int l = 0; l + 1 < levels; ++l) {
        Field fine = runs[l + 1].u_end;
        // bring the finer solution down to level l
        const Field d = runs[l].u_end - restrict_by_averaging(fine, doms[l]);
        rep.distances_l2.push_back(norm_l2(d));
        rep.distances_h1.push_back(detail::h1_norm(d));
        rep.observed_order_cum.push_back(
            loglog_slope(std::vector<double>(rep.ladder.begin(), rep.ladder.begin() + l + 1), rep.distances_l2));
    }
    rep.observed_order = rep.observed_order_cum.back();
    for (auto& r : runs) {
        rep.overshoot.push_back(r.overshoot);
        rep.series.push_back(std::move(r.series));
    }
    return rep;
}

inline constexpr const char* sweep_csv_header = "param,distance_l2,distance_h1,observed_order_cum";

inline void write_sweep_csv(std::ostream& os, const ConvergenceReport& rep)
{
    os << sweep_csv_header << '\n';
    char buf[256];
    for (std::size_t i = 0; i < rep.distances_l2.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", rep.ladder[i], rep.distances_l2[i],
                      rep.distances_h1[i], rep.observed_order_cum[i]);
        os << buf;
    }
}

struct MeanMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ContractionReport {
    std::vector<double> t;
    std::vector<double> d;
    /// Smallest rho with d(t) <= d(0) exp(rho t) on every recorded t > 0.
    double rho_hat = 0.0;
    /// Least-squares slope of log d against t.
    double rho_fit = 0.0;
    /// Largest growth rate between consecutive records in the second half.
    double late_rate = 0.0;
};

/// d = |u1 - u2|_{H^-1} + sqrt(eps) |u1 - u2|_{L^2}.
inline double contraction_distance(const Field& u1, const Field& u2, double epsilon)
{
    Field diff = u1 - u2;
    diff += -mean(diff);
    return norm_hm1(diff) + std::sqrt(epsilon) * norm_l2(diff);
}

/// Two trajectories from u0 and u0 + perturbation (which must have zero mean).
inline ContractionReport contraction_check(const Scenario& sc, const Field& perturbation)
{
    const Field u1 = sc.initial_field();
    const double scale = std::max(u1.max_abs(), perturbation.max_abs());
    if (std::abs(mean(perturbation)) > 1e-12 * std::max(scale, 1e-300))
        throw MeanMismatch("contraction_check: initial means differ by " + std::to_string(mean(perturbation)));
    const Field u2 = u1 + perturbation;
    RunOptions opts;
    opts.diagnostics_every = sc.diagnostics_every;
    auto futures = std::array{std::async(std::launch::async, [&] { return run(u1, sc.stepper, sc.params, opts); }),
                              std::async(std::launch::async, [&] { return run(u2, sc.stepper, sc.params, opts); })};
    const RunResult r1 = futures[0].get();
    const RunResult r2 = futures[1].get();
    if (!r1.ok() || !r2.ok())
        throw StepFailure("contraction_check: " + (r1.ok() ? *r2.failure : *r1.failure), 0.0, 0, sc.stepper.tau);
    if (r1.trajectory.size() != r2.trajectory.size())
        throw std::logic_error("contraction_check: trajectories recorded at different times");
    ContractionReport rep;
    for (std::size_t k = 0; k < r1.trajectory.size(); ++k) {
        rep.t.push_back(r1.trajectory[k].t);
        rep.d.push_back(contraction_distance(r1.trajectory[k].u, r2.trajectory[k].u, sc.params.epsilon));
    }
    const double d0 = rep.d.front();
    rep.rho_hat = -std::numeric_limits<double>::infinity();
    double st = 0, sy = 0, stt = 0, sty = 0;
    int n = 0;
    for (std::size_t k = 0; k < rep.t.size(); ++k) {
        if (rep.d[k] <= 0.0 || d0 <= 0.0)
            continue;
        const double y = std::log(rep.d[k] / d0);
        if (rep.t[k] > 0.0)
            rep.rho_hat = std::max(rep.rho_hat, y / rep.t[k]);
        st += rep.t[k];
        sy += y;
        stt += rep.t[k] * rep.t[k];
        sty += rep.t[k] * y;
        ++n;
    }
    if (d0 <= 0.0)
        rep.rho_hat = 0.0;
    rep.rho_fit = n > 1 ? (n * sty - st * sy) / (n * stt - st * st) : 0.0;
    rep.late_rate = -std::numeric_limits<double>::infinity();
    for (std::size_t k = rep.t.size() / 2; k + 1 < rep.t.size(); ++k)
        if (rep.d[k] > 0.0 && rep.d[k + 1] > 0.0)
            rep.late_rate =
                std::max(rep.late_rate, std::log(rep.d[k + 1] / rep.d[k]) / (rep.t[k + 1] - rep.t[k]));
    return rep;
}

/// Largest growth rate of the linearisation about any constant state in
/// [-1, 1], taken over the grid's cosine modes: a ceiling for how fast two
/// nearby trajectories can separate while the dynamics stays near-linear.
inline double linear_growth_bound(const Domain& dom, const ModelParams& p)
{
    const PotentialSpec pot = p.effective_potential();
    const auto [lo, hi] = pot.domain();
    double fmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 2000; ++i) {
        const double r = std::clamp(-1.0 + i * 1e-3, std::nextafter(lo, 0.0), std::nextafter(hi, 0.0));
        fmin = std::min(fmin, potential_fprime(pot, r));
    }
    const auto basis = SpectralBasis::of(dom);
    double best = 0.0;
    for (double k2 : basis->eigenvalues()) {
        const double rate = p.mobility * k2 * (-fmin - p.coefficient.a_low() * k2 - p.delta * k2 * k2) /
                            (1.0 + p.viscosity() * p.mobility * k2);
        best = std::max(best, rate);
    }
    return best;
}

/// Same, with a seeded mean-zero perturbation scaled so that d(0) = amplitude.
inline ContractionReport contraction_check(const Scenario& sc, double amplitude, std::uint64_t seed = 1)
{
    Field p = make_initial(init::SeededNoise{0.0, 1.0, seed}, sc.domain, false);
    p = smooth_initial_datum(p, 1e-3, 1);
    p += -mean(p);
    const double d = contraction_distance(p, Field(sc.domain), sc.params.epsilon);
    if (amplitude == 0.0 || d == 0.0)
        return contraction_check(sc, Field(sc.domain));
    p *= amplitude / d;
    return contraction_check(sc, p);
}

} // namespace nlch
