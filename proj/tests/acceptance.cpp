// Acceptance run: one line per criterion, exit status 1 if any fails.

#include "nlch/checks.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>

using namespace nlch;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// shared noisy quench on the unit interval
Scenario quench(Mode mode, double sigma)
{
    Scenario sc;
    sc.domain = Domain::line(128);
    sc.params.mode = mode;
    sc.params.sigma = sigma;
    sc.params.potential = PotentialSpec::logarithmic(3.0);
    sc.params.coefficient = CoefficientSpec::constant(1e-3);
    if (mode == Mode::Sixth)
        sc.params.delta = 1e-7;
    sc.stepper.tau = 1e-4;
    sc.initial = init::SeededNoise{0.0, 0.05, 7};
    return sc;
}

Outcome mass_and_energy(bool energy)
{
    Outcome o{true, ""};
    for (Mode m : {Mode::Fourth, Mode::Sixth}) {
        Scenario sc = quench(m, 1e-3);
        sc.stepper.t_end = 0.05;
        const RunResult r = run(sc.initial_field(), sc.stepper, sc.params, record_every(1, false));
        if (!r.ok())
            return {false, *r.failure};
        const auto& rec = r.diagnostics.records;
        double drift = 0.0, rise = -1e300;
        for (std::size_t k = 1; k < rec.size(); ++k) {
            drift = std::max(drift, std::abs(rec[k].mass - rec[0].mass));
            const double slack = sc.stepper.accept_energy_slack * (1 + std::abs(rec[k - 1].energy));
            rise = std::max(rise, rec[k].energy - rec[k - 1].energy - slack);
        }
        const char* name = m == Mode::Fourth ? "fourth" : "sixth";
        if (!energy) {
            o.pass = o.pass && drift <= 1e-10;
            o.detail += fmt("%s max drift %.2e; ", name, drift);
        } else {
            o.pass = o.pass && rise <= 0.0;
            o.detail += fmt("%s max rise over slack %.2e; ", name, rise);
        }
    }
    if (!energy)
        return o;

    // energy-equality residual under tau halving
    for (Mode m : {Mode::Fourth, Mode::Sixth}) {
        std::vector<double> taus{4e-4, 2e-4, 1e-4}, res;
        for (double tau : taus) {
            Scenario sc = quench(m, 1e-2);
            if (m == Mode::Fourth)
                sc.params.epsilon = 0.1;
            sc.stepper.tau = tau;
            sc.stepper.t_end = 0.02;
            const RunResult r = run(sc.initial_field(), sc.stepper, sc.params, record_every(1, false));
            if (!r.ok())
                return {false, *r.failure};
            const auto e = energy_equality_residual(r.diagnostics);
            res.push_back(*std::max_element(e.begin(), e.end()));
        }
        const double order = loglog_slope(taus, res);
        o.pass = o.pass && order >= 0.9;
        o.detail += fmt("%s residual order %.3f (%.2e -> %.2e); ", m == Mode::Fourth ? "fourth eps=0.1" : "sixth",
                        order, res.front(), res.back());
    }
    return o;
}

ModelParams linear_model(double delta, double eps, double a0, double lambda0)
{
    ModelParams p;
    p.mode = delta > 0.0 ? Mode::Sixth : Mode::Fourth;
    p.delta = delta;
    p.epsilon = eps;
    p.coefficient = CoefficientSpec::constant(a0);
    p.potential = PotentialSpec::linear(lambda0);
    return p;
}

Outcome dispersion()
{
    Outcome o{true, ""};
    const Domain dom = Domain::line(128);
    for (const auto& [d, e, a, l] : {std::array{0.0, 0.0, 1.0, 1.0}, std::array{0.0, 1.0, 1.0, 1.0},
                                     std::array{1e-4, 0.0, 1.0, 1.0}}) {
        const DispersionRow row = dispersion_check(dom, linear_model(d, e, a, l), {1}).front();
        o.pass = o.pass && row.rel_err <= 1e-2;
        o.detail += fmt("(%g,%g,%g,%g) mu=%.5f vs %.5f err %.1e; ", d, e, a, l, row.mu_numeric, row.mu_analytic,
                        row.rel_err);
    }
    return o;
}

Outcome yosida()
{
    Outcome o{true, ""};
    int failed = 0, total = 0;
    for (const auto& r : yosida_property_suite()) {
        ++total;
        if (!r.passed) {
            ++failed;
            o.pass = false;
            o.detail += r.property + ": " + r.detail + "; ";
        }
    }
    o.detail = fmt("%d/%d properties on sigma {1e-1,1e-2,1e-3}, 10^4 samples; ", total - failed, total) + o.detail;
    return o;
}

Outcome dpgg()
{
    const DpggStudy s = dpgg_refinement_study({32, 64, 128});
    return {s.order >= 1.6 && s.order <= 2.4,
            fmt("residuals %.3e %.3e %.3e, order %.3f", s.residuals[0], s.residuals[1], s.residuals[2], s.order)};
}

Outcome oracle()
{
    const Domain dom = Domain::line(64);
    ModelParams p;
    p.mode = Mode::Fourth;
    p.sigma = 1e-2;
    p.potential = PotentialSpec::logarithmic(3.0);
    p.coefficient = CoefficientSpec::even_quadratic(1e-2, 5e-3);
    const Field u0 = make_initial(init::CosineMode{0.1, 0.3, 1}, dom);
    double tau_rk = 0.0;
    const Field ref = explicit_oracle_auto(u0, 1e-3, p, &tau_rk);
    std::vector<double> taus{1e-4, 5e-5, 2.5e-5}, errs;
    for (double tau : taus) {
        StepperConfig cfg;
        cfg.tau = tau;
        cfg.t_end = 1e-3;
        const RunResult r = run(u0, cfg, p, record_every(1, false));
        if (!r.ok())
            return {false, *r.failure};
        errs.push_back((r.final_state.u - ref).max_abs());
    }
    const double order = loglog_slope(taus, errs);
    return {order >= 0.8 && order <= 1.2, fmt("RK4 dt %.2e; errors %.3e %.3e %.3e, order %.3f", tau_rk, errs[0],
                                              errs[1], errs[2], order)};
}

Outcome delta_ladder()
{
    Scenario sc = quench(Mode::Sixth, 1e-3);
    sc.params.coefficient = CoefficientSpec::even_quadratic(0.2, -0.04);
    sc.stepper.t_end = 0.02;
    sc.diagnostics_every = 50;
    const ConvergenceReport rep = sweep_delta(sc, {1e-2, 1e-3, 1e-4, 1e-5});
    bool dec = true;
    for (std::size_t i = 1; i < rep.distances_l2.size(); ++i)
        dec = dec && rep.distances_l2[i] < rep.distances_l2[i - 1];
    return {dec, fmt("a = 0.2 - 0.04 u^2; L2 distances %.3e %.3e %.3e", rep.distances_l2[0], rep.distances_l2[1],
                     rep.distances_l2[2])};
}

Outcome sigma_overshoot()
{
    Scenario sc = quench(Mode::Fourth, 0.0);
    sc.params.potential = PotentialSpec::logarithmic(6.0);
    sc.stepper.t_end = 0.02;
    sc.diagnostics_every = 50;
    const RunResult r = run(sc.initial_field(), sc.stepper, sc.params, record_every(1, false));
    if (!r.ok())
        return {false, "sigma=0 run: " + *r.failure};
    double sup = 0.0;
    for (const auto& rec : r.diagnostics.records)
        sup = std::max(sup, rec.sup_u);
    const ConvergenceReport rep = sweep_sigma(sc, {1e-1, 1e-2, 1e-3});
    const auto& ov = rep.overshoot;
    const bool pass = sup < 1.0 && ov[0] > ov[1] && ov[1] > ov[2];
    return {pass, fmt("lambda=6; sigma=0 max|u| = %.12f; overshoot %.3e %.3e %.3e", sup, ov[0], ov[1], ov[2])};
}

Outcome contraction()
{
    Scenario sc = quench(Mode::Fourth, 1e-2);
    // constant a only reaches kappa = 0, take a convex a with (1/a)'' < 0
    sc.params.coefficient = CoefficientSpec::even_quadratic(1e-3, 2e-4);
    sc.stepper.t_end = 0.02;
    sc.diagnostics_every = 10;
    const RegimeReport reg = check_uniqueness_regime(sc.params.coefficient);
    if (!(reg.kappa > 0.0))
        return {false, fmt("kappa %.3e is not positive", reg.kappa)};
    const ContractionReport rep = contraction_check(sc, 1e-4);
    bool bounded = std::isfinite(rep.rho_hat);
    for (std::size_t k = 0; k < rep.t.size(); ++k)
        bounded = bounded && rep.d[k] <= rep.d[0] * std::exp(rep.rho_hat * rep.t[k]) * (1 + 1e-12);
    const double cap = linear_growth_bound(sc.domain, sc.params);
    const bool tame = rep.late_rate <= cap;
    return {bounded && tame && std::abs(rep.d[0] - 1e-4) < 1e-12,
            fmt("kappa %.3e; d(0) %.1e d(end) %.3e; rho_hat %.2f, late rate %.2f <= linear bound %.2f", reg.kappa,
                rep.d.front(), rep.d.back(), rep.rho_hat, rep.late_rate, cap)};
}

Outcome determinism()
{
    namespace fs = std::filesystem;
    const RunConfig c = parse_config_text("mode = sixth\ncells = 24, 16\ndelta = 1e-6\nsigma = 0.01\nlambda = 3\n"
                                          "coefficient = general_quadratic\na0 = 0.01\na1 = 0.002\na2 = 0.003\n"
                                          "initial = noise\ninitial_seed = 42\ntau = 3e-4\nt_end = 3e-3\n");
    const bool config_ok = parse_config_text(serialize_config(c)) == c &&
                           serialize_config(parse_config_text(serialize_config(c))) == serialize_config(c);

    const RunResult a = run(c.initial_field(), c.stepper(), c.model());
    const RunResult b = run(c.initial_field(), c.stepper(), c.model());
    const bool runs_ok = a.ok() && b.ok() && a.final_state.u.values() == b.final_state.u.values() &&
                         a.final_state.w.values() == b.final_state.w.values();

    const fs::path dir = fs::temp_directory_path() / "nlch_acceptance";
    fs::create_directories(dir);
    write_snapshot(a.final_state.u, (dir / "s.chnl").string(), a.final_state.t);
    const Snapshot s = read_snapshot((dir / "s.chnl").string());
    const Checkpoint ck{a.final_state.t, c.tau, a.final_state.u, a.final_state.w};
    write_checkpoint(ck, (dir / "c.chkp").string());
    const Checkpoint back = read_checkpoint((dir / "c.chkp").string());
    const bool files_ok = s.field.values() == a.final_state.u.values() && s.t == a.final_state.t &&
                          s.field.domain() == a.final_state.u.domain() &&
                          encode_checkpoint(back) == encode_checkpoint(ck);
    fs::remove_all(dir);
    return {config_ok && runs_ok && files_ok,
            fmt("config roundtrip %s, snapshot/checkpoint %s, seeded reruns %s", config_ok ? "identical" : "DIFFER",
                files_ok ? "bit-exact" : "DIFFER", runs_ok ? "bit-identical" : "DIFFER")};
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"mass conservation", [] { return mass_and_energy(false); }},
        {"energy dissipation", [] { return mass_and_energy(true); }},
        {"dispersion relation", dispersion},
        {"Yosida/Moreau properties", yosida},
        {"DPGG identity order", dpgg},
        {"implicit vs RK4 oracle", oracle},
        {"delta -> 0 consistency", delta_ladder},
        {"bounds and sigma overshoot", sigma_overshoot},
        {"uniqueness contraction", contraction},
        {"determinism and formats", determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += !o.pass;
        std::printf("%s %2zu %-28s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
