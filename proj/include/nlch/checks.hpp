// checks.hpp
// Built-in invariant suite behind `nlch check`: small scenarios, one
// pass/fail result per property, with the first counterexample on failure.

#pragma once

#include "nlch/config.hpp"
#include "nlch/io.hpp"

#include <ostream>

namespace nlch {

struct CheckResult {
    std::string module;
    std::string property;
    bool passed = false;
    std::string detail;
};

namespace detail {

inline std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

inline Field random_field(const Domain& dom, std::uint64_t seed)
{
    Field f(dom);
    for (std::size_t n = 0; n < f.size(); ++n)
        f[n] = counter_uniform(seed, n);
    return f;
}

} // namespace detail

// ---- Yosida / Moreau family -------------------------------------------------

struct YosidaSuiteOptions {
    std::vector<double> sigmas{1e-1, 1e-2, 1e-3};
    int samples = 10000;
    double lambda = 3.0;
};

/// Properties of f_sigma and F_sigma for the logarithmic family.
inline std::vector<CheckResult> yosida_property_suite(const YosidaSuiteOptions& o = {})
{
    const PotentialSpec spec = PotentialSpec::logarithmic(o.lambda);
    std::vector<CheckResult> out;
    const std::string mod = "energetics";
    auto sample = [&](double a, double b, int i) { return a + (b - a) * (i + 0.5) / o.samples; };

    {
        CheckResult r{mod, "f_sigma(0) = 0", true, ""};
        for (double s : o.sigmas)
            if (yosida_f(spec, s, 0.0) != 0.0 && r.passed) {
                r.passed = false;
                r.detail = detail::fmt("sigma=%g f_sigma(0)=%g", s, yosida_f(spec, s, 0.0));
            }
        out.push_back(r);
    }
    {
        CheckResult r{mod, "f_sigma nondecreasing and 1/sigma-Lipschitz", true, ""};
        for (double s : o.sigmas)
            for (int i = 0; i < o.samples && r.passed; ++i) {
                const double x = sample(-3.0, 3.0, i);
                const double y = -3.0 + 6.0 * (0.5 + 0.5 * counter_uniform(97, i));
                if (x == y)
                    continue;
                const double q = (yosida_f(spec, s, x) - yosida_f(spec, s, y)) / (x - y);
                if (q < -1e-9 || q > (1.0 / s) * (1.0 + 1e-9)) {
                    r.passed = false;
                    r.detail = detail::fmt("sigma=%g pair (%.17g, %.17g)", s, x, y) +
                               detail::fmt(" difference quotient %.6g", q);
                }
            }
        out.push_back(r);
    }
    {
        CheckResult r{mod, "Moreau ordering F_s1 <= F_s2 <= F0 for s2 <= s1", true, ""};
        for (int i = 0; i < o.samples && r.passed; ++i) {
            const double x = sample(-0.999, 0.999, i);
            double prev = -std::numeric_limits<double>::infinity();
            for (double s : o.sigmas) { // decreasing sigma, so F must not decrease
                const double F = moreau_F(spec, s, x);
                if (F < prev - 1e-12 * (1.0 + std::abs(prev))) {
                    r.passed = false;
                    r.detail = detail::fmt("r=%.17g sigma=%g F=%.17g", x, s, F) + detail::fmt(" < %.17g", prev);
                }
                prev = F;
            }
            if (r.passed && prev > spec.F0(x) + 1e-12 * (1.0 + std::abs(prev))) {
                r.passed = false;
                r.detail = detail::fmt("r=%.17g F_sigma=%.17g > F0=%.17g", x, prev, spec.F0(x));
            }
        }
        out.push_back(r);
    }
    {
        // F_sigma(r) >= lambda r^2 - c with c = max_r (lambda r^2 - F_sigma(r)) not growing as sigma drops
        CheckResult r{mod, "coercivity constant uniform in sigma", true, ""};
        std::vector<double> cs;
        for (double s : o.sigmas) {
            double c = -std::numeric_limits<double>::infinity();
            for (int i = 0; i < o.samples; ++i) {
                const double x = sample(-3.0, 3.0, i);
                c = std::max(c, o.lambda * x * x - moreau_F(spec, s, x));
            }
            cs.push_back(c);
        }
        for (std::size_t k = 1; k < cs.size(); ++k)
            if (!std::isfinite(cs[k]) || cs[k] > cs[0] + 1e-9) {
                r.passed = false;
                r.detail = detail::fmt("c(sigma=%g)=%.6g exceeds c(sigma=%g)", o.sigmas[k], cs[k], o.sigmas[0]) +
                           detail::fmt("=%.6g", cs[0]);
            }
        if (r.passed)
            r.detail = detail::fmt("c over ladder: %.6g .. %.6g", cs.back(), cs.front());
        out.push_back(r);
    }
    {
        CheckResult r{mod, "uniform convergence on [-0.9, 0.9] monotone in sigma", true, ""};
        std::vector<double> err;
        for (double s : o.sigmas) {
            double e = 0.0;
            for (int i = 0; i < o.samples; ++i) {
                const double x = sample(-0.9, 0.9, i);
                e = std::max(e, std::abs(yosida_f(spec, s, x) - spec.f0(x)));
            }
            err.push_back(e);
        }
        for (std::size_t k = 1; k < err.size(); ++k)
            if (!(err[k] < err[k - 1])) {
                r.passed = false;
                r.detail = detail::fmt("sup error %.6g at sigma=%g not below %.6g", err[k], o.sigmas[k], err[k - 1]);
            }
        if (r.passed)
            r.detail = detail::fmt("sup errors %.3g -> %.3g", err.front(), err.back());
        out.push_back(r);
    }
    for (double m : {0.1, 1.0}) {
        // C_m = -min_{[-2,2]} (f' - m|f|); bounded uniformly means it does not blow up as sigma drops
        CheckResult r{mod, "controlled derivative, m=" + detail::fmt("%g", m), true, ""};
        std::vector<double> cm;
        for (double s : o.sigmas) {
            double lo = std::numeric_limits<double>::infinity();
            for (int i = 0; i < o.samples; ++i) {
                const double x = sample(-2.0, 2.0, i);
                const double fd = (yosida_f(spec, s, x + 1e-6) - yosida_f(spec, s, x - 1e-6)) / 2e-6;
                lo = std::min(lo, fd - m * std::abs(yosida_f(spec, s, x)));
            }
            cm.push_back(std::max(0.0, -lo));
        }
        const double first = cm.front();
        for (std::size_t k = 0; k < cm.size(); ++k)
            if (!std::isfinite(cm[k]) || cm[k] > 2.0 * first + 1.0) {
                r.passed = false;
                r.detail = detail::fmt("C_m(sigma=%g)=%.6g vs C_m(sigma=%g)", o.sigmas[k], cm[k], o.sigmas[0]) +
                           detail::fmt("=%.6g", first);
            }
        if (r.passed)
            r.detail = detail::fmt("C_m over ladder <= %.4g", *std::max_element(cm.begin(), cm.end()));
        out.push_back(r);
    }
    return out;
}

// ---- DPGG identity ------------------------------------------------------------

struct DpggStudy {
    std::vector<int> grids;
    std::vector<double> residuals;
    double order = 0.0;
};

/// z = sin(2 pi x) sin(2 pi y) + cos(2 pi (x + 2y)) / 2, h(r) = r^2, periodic
/// unit square. The product term alone is too symmetric: its h^2 error
/// cancels and the residual falls like h^4.
inline DpggStudy dpgg_refinement_study(const std::vector<int>& grids = {32, 64, 128})
{
    DpggStudy st;
    std::vector<double> hs;
    for (int n : grids) {
        const Domain dom = Domain::square(n, 1.0, Boundary::Periodic);
        const Field z = Field::from_function(
            dom, [](double x, double y, double) { return std::sin(2 * M_PI * x) * std::sin(2 * M_PI * y) + 0.5 * std::cos(2 * M_PI * (x + 2 * y));
            });
        st.grids.push_back(n);
        st.residuals.push_back(dpgg_identity_residual(
            z, [](double r) { return r * r; }, [](double r) { return 2 * r; }, [](double) { return 2.0; }));
        hs.push_back(1.0 / n);
    }
    st.order = loglog_slope(hs, st.residuals);
    return st;
}

// ---- the suite ----------------------------------------------------------------

inline std::vector<CheckResult> check_grid()
{
    std::vector<CheckResult> out;
    const std::string mod = "grid";
    for (Boundary bc : {Boundary::NoFlux, Boundary::Periodic})
        for (int dim = 1; dim <= 3; ++dim) {
            const int n = dim == 3 ? 8 : 16;
            const Domain dom(dim, {n, dim > 1 ? n + 2 : 1, dim > 2 ? n - 2 : 1}, {1.0, 1.3, 0.7}, bc);
            const std::string tag = std::string(bc == Boundary::NoFlux ? " noflux " : " periodic ") +
                                    std::to_string(dim) + "D";
            const Field f = detail::random_field(dom, 11 + dim);
            const Field g = detail::random_field(dom, 23 + dim);
            const double scale = f.max_abs() * dom.volume() / (dom.min_spacing() * dom.min_spacing());
            const double div = std::abs(integrate(laplacian(f)));
            out.push_back({mod, "discrete divergence theorem" + tag, div <= 1e-12 * scale,
                           detail::fmt("|int lap f| = %.3g, bound %.3g", div, 1e-12 * scale)});
            const double sa = std::abs(inner(laplacian(f), g) - inner(f, laplacian(g)));
            out.push_back({mod, "self-adjointness" + tag, sa <= 1e-12 * scale,
                           detail::fmt("asymmetry %.3g", sa)});
            const double neg = inner(f, laplacian(f));
            out.push_back({mod, "negativity" + tag, neg <= 0.0, detail::fmt("<f, lap f> = %.6g", neg)});
        }
    {
        std::vector<double> hs, errs;
        for (int n : {32, 128}) {
            const Domain dom = Domain::line(n);
            const Field f = Field::from_function(dom, [](double x, double, double) { return std::cos(M_PI * x); });
            Field e = laplacian(f) + M_PI * M_PI * f;
            hs.push_back(1.0 / n);
            errs.push_back(e.max_abs());
        }
        const double order = loglog_slope(hs, errs);
        out.push_back({mod, "laplacian second-order convergence", order >= 1.8 && order <= 2.2,
                       detail::fmt("observed order %.3f", order)});
    }
    {
        const Domain dom = Domain::square(16, 1.0, Boundary::NoFlux);
        Field f = detail::random_field(dom, 5);
        f += -mean(f);
        const Field back = -1.0 * laplacian(inv_laplacian_meanzero(f));
        const double err = (back - f).max_abs();
        out.push_back({mod, "inverse Laplacian roundtrip", err <= 1e-10, detail::fmt("max error %.3g", err)});
    }
    return out;
}

inline std::vector<CheckResult> check_energetics()
{
    YosidaSuiteOptions o;
    o.samples = 2000;
    std::vector<CheckResult> out = yosida_property_suite(o);
    const std::string mod = "energetics";
    {
        const CoefficientSpec a = CoefficientSpec::even_quadratic(1.0, 0.5);
        double worst = 0.0;
        for (double x : {-2.0, -1.0, 1.0, 2.0}) {
            const double e = 1e-7;
            worst = std::max({worst, std::abs(a.a(x + e) - a.a(x - e)), std::abs(a.aprime(x + e) - a.aprime(x - e)),
                              std::abs(a.asecond(x + e) - a.asecond(x - e))});
        }
        out.push_back({mod, "C2 extension of a(u)", worst <= 1e-6, detail::fmt("largest jump %.3g", worst)});
        double rt = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const double x = -2.0 + 4.0 * (i + 0.5) / 1000;
            rt = std::max(rt, std::abs(a.phi_inverse(a.phi(x)) - x));
        }
        out.push_back({mod, "phi roundtrip", rt <= 1e-10, detail::fmt("max error %.3g", rt)});
    }
    {
        const RegimeReport rc = check_uniqueness_regime(CoefficientSpec::constant(2.0));
        const RegimeReport rq = check_uniqueness_regime(CoefficientSpec::even_quadratic(1.0, 1.0));
        const bool ok = rc.convex_a && rc.kappa == 0.0 && rc.unique_viscous && !rc.unique_nonviscous &&
                        !rq.unique_viscous;
        out.push_back({mod, "uniqueness regime flags", ok, detail::fmt("kappa(const)=%g kappa(1+u^2)=%g", rc.kappa, rq.kappa)});
    }
    return out;
}

inline std::vector<CheckResult> check_model()
{
    std::vector<CheckResult> out;
    const std::string mod = "model";
    const Domain dom = Domain::line(32);
    const Field u = 0.3 * detail::random_field(dom, 3);
    const Field u_old = 0.3 * detail::random_field(dom, 4);
    const Field w = detail::random_field(dom, 5);
    ModelParams p;
    p.sigma = 1e-2;
    p.epsilon = 0.05;
    p.potential = PotentialSpec::logarithmic(3.0);
    p.coefficient = CoefficientSpec::even_quadratic(1.0, 0.5);
    const SimState next{0.0, u, w}, prev{0.0, u_old, w};
    ModelParams p4 = p;
    p4.mode = Mode::Fourth;
    // delta = 0 on purpose; Sixth adds sigma to the viscosity, so take it off epsilon
    ModelParams p6b = p;
    p6b.mode = Mode::Sixth;
    p6b.epsilon = p.epsilon - p.sigma;
    const auto r4 = residual(next, prev, 1e-3, p4);
    const auto r6b = residual(next, prev, 1e-3, p6b);
    const double d = std::max((r4.first - r6b.first).max_abs(), (r4.second - r6b.second).max_abs());
    out.push_back({mod, "mode consistency fourth/sixth(delta=0)", d <= 1e-12 * (1.0 + r4.second.max_abs()),
                   detail::fmt("max difference %.3g", d)});
    {
        // divergence form pairing for the pointwise operator, periodic
        std::vector<double> hs, errs;
        for (int n : {32, 64}) {
            const Domain pd = Domain::line(n, 1.0, Boundary::Periodic);
            const Field uu = Field::from_function(pd, [](double x, double, double) {
                return 0.4 * std::sin(2 * M_PI * x) + 0.1 * std::cos(4 * M_PI * x);
            });
            const Field vv =
                Field::from_function(pd, [](double x, double, double) { return std::cos(2 * M_PI * x + 0.3); });
            const CoefficientSpec a = CoefficientSpec::even_quadratic(1.0, 0.5);
            const double lhs = inner(calA(uu, a), vv);
            const Field gu = partial(uu, 0), gv = partial(vv, 0);
            Field integrand(pd);
            for (std::size_t k = 0; k < pd.size(); ++k)
                integrand[k] = a.a(uu[k]) * gu[k] * gv[k] + 0.5 * a.aprime(uu[k]) * gu[k] * gu[k] * vv[k];
            hs.push_back(1.0 / n);
            errs.push_back(std::abs(lhs - integrate(integrand)));
        }
        const double order = loglog_slope(hs, errs);
        out.push_back({mod, "calA divergence-form pairing O(h^2)", order > 1.6,
                       detail::fmt("errors %.3g -> %.3g, order %.2f", errs[0], errs[1], order)});
    }
    {
        const Field a = make_initial(init::SeededNoise{0.0, 0.05, 7}, dom);
        const Field b = make_initial(init::SeededNoise{0.0, 0.05, 7}, dom);
        out.push_back({mod, "seeded initial data deterministic", a.values() == b.values(), ""});
    }
    return out;
}

inline std::vector<CheckResult> check_stepper()
{
    std::vector<CheckResult> out;
    const std::string mod = "stepper";
    Scenario sc;
    sc.domain = Domain::line(64);
    sc.params.mode = Mode::Fourth;
    sc.params.sigma = 1e-3;
    sc.params.potential = PotentialSpec::logarithmic(3.0);
    sc.params.coefficient = CoefficientSpec::constant(1e-3);
    sc.stepper.tau = 1e-4;
    sc.stepper.t_end = 5e-3;
    sc.initial = init::SeededNoise{0.1, 0.05, 7};
    for (Mode m : {Mode::Fourth, Mode::Sixth, Mode::PhaseField}) {
        Scenario s = sc;
        s.params.mode = m;
        s.params.delta = m == Mode::Sixth ? 1e-5 : 0.0;
        const char* name = m == Mode::Fourth ? "fourth" : m == Mode::Sixth ? "sixth" : "phasefield";
        const RunResult r = run(s.initial_field(), s.stepper, s.params, RunOptions{});
        if (!r.ok()) {
            out.push_back({mod, std::string("run completes (") + name + ")", false, *r.failure});
            continue;
        }
        double drift = 0.0, rise = 0.0;
        const auto& rec = r.diagnostics.records;
        // the phase-field system conserves mean(u + sigma w)
        auto conserved = [&](const SimState& st) { return mean(st.u) + s.params.sigma_pf() * mean(st.w); };
        for (const auto& st : r.trajectory)
            drift = std::max(drift, std::abs(conserved(st) - conserved(r.trajectory.front())));
        for (std::size_t k = 0; k < rec.size(); ++k) {
            if (k)
                rise = std::max(rise, rec[k].energy + 0.5 * r.diagnostics.sigma_pf * rec[k].w_sq -
                                          rec[k - 1].energy - 0.5 * r.diagnostics.sigma_pf * rec[k - 1].w_sq -
                                          s.stepper.accept_energy_slack * (1.0 + std::abs(rec[k - 1].energy)));
            }
        out.push_back({mod, std::string("mass conservation (") + name + ")",
                       drift <= 1e-10, detail::fmt("max drift %.3g", drift)});
        out.push_back({mod, std::string("energy dissipation (") + name + ")", rise <= 0.0,
                       detail::fmt("largest increase beyond slack %.3g", rise)});
    }
    {
        Scenario s = sc;
        s.params.sigma = 0.0;
        s.params.potential = PotentialSpec::logarithmic(6.0);
        const RunResult r = run(s.initial_field(), s.stepper, s.params, record_every(1, false));
        double sup = 0.0;
        for (const auto& d : r.diagnostics.records)
            sup = std::max(sup, d.sup_u);
        out.push_back({mod, "bound preservation (sigma=0, guarded)", r.ok() && sup < 1.0,
                       detail::fmt("max|u| = %.17g", sup)});
    }
    {
        Scenario s = sc;
        s.params.sigma = 0.0;
        const Field c(s.domain, 0.2);
        const auto [next, rep] = step(ImplicitStepper(s.params, s.stepper).initial_state(c), s.stepper, s.params);
        const bool same = (next.u - c).max_abs() <= 1e-14;
        out.push_back({mod, "steady constant state", same && rep.newton_iters <= 1,
                       detail::fmt("newton iterations %g", rep.newton_iters)});
    }
    return out;
}

inline std::vector<CheckResult> check_diagnostics()
{
    std::vector<CheckResult> out;
    const std::string mod = "diagnostics";
    {
        const DpggStudy st = dpgg_refinement_study();
        out.push_back({mod, "DPGG residual O(h^2)", st.order >= 1.6 && st.order <= 2.4,
                       detail::fmt("observed order %.3f", st.order)});
    }
    {
        ModelParams p;
        p.coefficient = CoefficientSpec::constant(1.0);
        p.potential = PotentialSpec::linear(1.0);
        const auto rows = dispersion_check(Domain::line(64), p, {1});
        out.push_back({mod, "dispersion k=pi", rows[0].rel_err <= 1e-2,
                       detail::fmt("mu %.5g vs %.5g", rows[0].mu_numeric, rows[0].mu_analytic)});
    }
    {
        Scenario sc;
        sc.domain = Domain::line(32);
        sc.params.epsilon = 0.1;
        sc.params.potential = PotentialSpec::logarithmic(3.0);
        sc.params.sigma = 1e-2;
        sc.params.coefficient = CoefficientSpec::constant(1e-2);
        sc.stepper.t_end = 2e-3;
        sc.initial = init::CosineMode{0.0, 0.1, 1};
        const RunResult r = run(sc.initial_field(), sc.stepper, sc.params, record_every(1, false));
        const auto res = energy_equality_residual(r.diagnostics);
        out.push_back({mod, "energy equality residual zero at t=0", r.ok() && res.front() == 0.0, ""});
        const ContractionReport c0 = contraction_check(sc, 0.0);
        double dmax = 0.0;
        for (double d : c0.d)
            dmax = std::max(dmax, d);
        out.push_back({mod, "zero perturbation gives d(t) = 0", dmax == 0.0, detail::fmt("max d %.3g", dmax)});
    }
    return out;
}

inline std::vector<CheckResult> check_cli()
{
    std::vector<CheckResult> out;
    const std::string mod = "cli";
    {
        const RunConfig c = parse_config_text("mode=sixth\ncells=32\ndelta=1e-4\nsigma=0.01\nlambda=3\n");
        const RunConfig back = parse_config_text(serialize_config(c));
        out.push_back({mod, "config roundtrip", back == c && serialize_config(back) == serialize_config(c), ""});
        bool named = false;
        try {
            parse_config_text("mode=sixth\ncells=32\ndelta=0\n");
        } catch (const ValidationError& e) {
            named = std::find(e.keys.begin(), e.keys.end(), "mode") != e.keys.end() &&
                    std::find(e.keys.begin(), e.keys.end(), "delta") != e.keys.end();
        }
        out.push_back({mod, "mode=sixth with delta=0 rejected naming both keys", named, ""});
    }
    {
        const Domain dom(2, {8, 6, 1}, {1.0, 0.75, 1.0}, Boundary::Periodic);
        const Field f = detail::random_field(dom, 9);
        const Snapshot s = decode_snapshot(encode_snapshot(f, 0.125));
        out.push_back({mod, "snapshot roundtrip bit-exact",
                       s.field.domain() == dom && s.field.values() == f.values() && s.t == 0.125, ""});
        std::string bytes = encode_snapshot(f, 0.0);
        bytes.resize(bytes.size() - 3);
        bool rejected = false;
        try {
            decode_snapshot(bytes);
        } catch (const FormatError&) {
            rejected = true;
        }
        out.push_back({mod, "truncated snapshot rejected", rejected, ""});
    }
    return out;
}

/// Runs every group; `report` gets one line per property and per group.
inline bool run_check_suite(std::ostream& report, bool verbose = true)
{
    using Group = std::pair<const char*, std::function<std::vector<CheckResult>()>>;
    const std::vector<Group> groups{{"grid", check_grid},           {"energetics", check_energetics},
                                    {"model", check_model},         {"stepper", check_stepper},
                                    {"diagnostics", check_diagnostics}, {"cli", check_cli}};
    bool all = true;
    for (const auto& [name, fn] : groups) {
        std::vector<CheckResult> results;
        try {
            results = fn();
        } catch (const std::exception& e) {
            results.push_back({name, "group raised an exception", false, e.what()});
        }
        int passed = 0;
        for (const auto& r : results) {
            passed += r.passed;
            if (verbose || !r.passed)
                report << (r.passed ? "  pass  " : "  FAIL  ") << r.module << ": " << r.property
                       << (r.detail.empty() ? "" : "  [" + r.detail + "]") << '\n';
        }
        const bool ok = passed == static_cast<int>(results.size());
        all = all && ok;
        report << (ok ? "PASS " : "FAIL ") << name << " (" << passed << "/" << results.size() << ")\n";
    }
    return all;
}

} // namespace nlch
