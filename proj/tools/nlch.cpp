// nlch: batch driver for runs, parameter sweeps and the check suite.
//
// exit codes: 0 ok, 1 bad input, 2 StepFailure, 3 check suite failed

#include "nlch/checks.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace nlch;

namespace {

struct Globals {
    std::string out;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
    std::optional<int> snapshot_every;
};

struct Failed {
    int code;
    std::string message;
};

RunConfig load(const std::string& path, const Globals& g)
{
    RunConfig c = parse_config(path);
    if (g.seed)
        c.initial_seed = *g.seed;
    if (!g.out.empty())
        c.output_dir = g.out;
    if (g.snapshot_every)
        c.snapshot_every = *g.snapshot_every;
    c.validate();
    return c;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string snapshot_name(long index)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "snapshot_%08ld.chnl", index);
    return buf;
}

int simulate(const RunConfig& c, const SimState& start, const Globals& g)
{
    const fs::path out = c.output_dir;
    fs::create_directories(out);
    write_text(out / "config.txt", serialize_config(c));
    const ModelParams p = c.model();
    const StepperConfig sc = c.stepper();

    RunOptions opts;
    opts.diagnostics_every = c.diagnostics_every;
    opts.keep_trajectory = false;
    opts.checkpoint_every = c.checkpoint_every;
    opts.checkpoint_dir = (out / "checkpoints").string();
    const long total = static_cast<long>(std::ceil((sc.t_end - start.t) / sc.tau - 1e-9));
    opts.on_step = [&](const SimState& s, long index) {
        if (c.snapshot_every > 0 && index % c.snapshot_every == 0)
            write_snapshot(s.u, (out / snapshot_name(index)).string(), s.t);
        if (!g.quiet && total >= 10 && index % std::max(1L, total / 10) == 0)
            std::fprintf(stderr, "  t=%.6g  max|u|=%.6f\n", s.t, s.u.max_abs());
    };
    write_snapshot(start.u, (out / snapshot_name(0)).string(), start.t);
    const RunResult r = run(start, sc, p, opts);

    std::ofstream csv(out / "diagnostics.csv", std::ios::trunc);
    write_diagnostics_csv(csv, r.diagnostics);
    write_snapshot(r.final_state.u, (out / "final.chnl").string(), r.final_state.t);
    write_checkpoint(Checkpoint{r.final_state.t, sc.tau, r.final_state.u, r.final_state.w},
                     (out / "final.chkp").string());
    if (!r.ok()) {
        std::cerr << "stepper.step: " << *r.failure << '\n';
        return 2;
    }
    if (!g.quiet) {
        const auto& last = r.diagnostics.records.back();
        std::printf("t=%.6g energy=%.10g mass=%.17g steps=%zu -> %s\n", last.t, last.energy, last.mass,
                    r.steps.size(), out.string().c_str());
    }
    return 0;
}

int cmd_run(const std::string& config, const Globals& g)
{
    const RunConfig c = load(config, g);
    const ImplicitStepper stepper(c.model(), c.stepper());
    return simulate(c, stepper.initial_state(c.initial_field()), g);
}

int cmd_resume(const std::string& checkpoint, const std::string& config, const Globals& g)
{
    const RunConfig c = load(config, g);
    const Checkpoint ck = read_checkpoint(checkpoint);
    if (ck.u.domain() != c.domain())
        throw ValidationError({"cells", "lengths", "bc"}, "resume: checkpoint domain does not match the config");
    if (ck.t > c.t_end)
        throw ValidationError({"t_end"}, "resume: checkpoint time is past t_end");
    return simulate(c, SimState{ck.t, ck.u, ck.w}, g);
}

void print_report(const ConvergenceReport& rep, const Globals& g)
{
    if (g.quiet)
        return;
    std::printf("%-12s %-14s %-14s %-10s %s\n", rep.parameter.c_str(), "distance_l2", "distance_h1", "order_cum",
                "overshoot");
    for (std::size_t i = 0; i < rep.ladder.size(); ++i) {
        if (i < rep.distances_l2.size())
            std::printf("%-12.4g %-14.6e %-14.6e %-10.4f %.6e\n", rep.ladder[i], rep.distances_l2[i],
                        rep.distances_h1[i], rep.observed_order_cum[i], rep.overshoot[i]);
        else
            std::printf("%-12.4g %-14s %-14s %-10s %.6e\n", rep.ladder[i], "-", "-", "-", rep.overshoot[i]);
    }
}

void write_report(const RunConfig& c, const ConvergenceReport& rep)
{
    const fs::path out = c.output_dir;
    fs::create_directories(out);
    write_text(out / "config.txt", serialize_config(c));
    std::ofstream csv(out / "sweep.csv", std::ios::trunc);
    write_sweep_csv(csv, rep);
    for (std::size_t i = 0; i < rep.series.size(); ++i) {
        const fs::path dir = out / ("entry_" + std::to_string(i));
        fs::create_directories(dir);
        std::ofstream d(dir / "diagnostics.csv", std::ios::trunc);
        write_diagnostics_csv(d, rep.series[i]);
    }
}

std::vector<double> parse_ladder(const std::string& text)
{
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        double x = 0.0;
        if (!detail::parse_number(detail::trim(item), x))
            throw ValidationError({"ladder"}, "bad ladder entry '" + item + "'");
        v.push_back(x);
    }
    if (v.empty())
        throw ValidationError({"ladder"}, "empty ladder");
    return v;
}

int cmd_sweep(const std::string& which, const std::string& config, const std::string& ladder, const Globals& g)
{
    const RunConfig c = load(config, g);
    const auto values = parse_ladder(ladder);
    ConvergenceReport rep;
    if (which == "delta") {
        const bool concave = check_uniqueness_regime(c.model().coefficient).concave_a;
        if (!concave && !g.quiet)
            std::fprintf(stderr, "note: a is not concave on [-1, 1]; the delta -> 0 regime is not guaranteed\n");
        rep = sweep_delta(c.scenario(), values, false);
    } else {
        rep = sweep_sigma(c.scenario(), values);
    }
    write_report(c, rep);
    print_report(rep, g);
    return 0;
}

int cmd_refine(const std::string& config, int levels, const Globals& g)
{
    const RunConfig c = load(config, g);
    const ConvergenceReport rep = refine(c.scenario(), levels);
    write_report(c, rep);
    print_report(rep, g);
    if (!g.quiet)
        std::printf("observed order %.4f\n", rep.observed_order);
    return 0;
}

int cmd_dispersion(const std::string& config, const Globals& g)
{
    const RunConfig c = load(config, g);
    const Domain dom = c.domain();
    const auto rows = dispersion_check(dom, c.model());
    const fs::path out = c.output_dir;
    fs::create_directories(out);
    std::ofstream csv(out / "dispersion.csv", std::ios::trunc);
    csv << "mode,k,mu_numeric,mu_analytic,rel_err\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.mode, r.k, r.mu_numeric, r.mu_analytic,
                      r.rel_err);
        csv << buf;
    }
    if (!g.quiet) {
        std::printf("%-5s %-12s %-14s %-14s %s\n", "mode", "k", "mu_numeric", "mu_analytic", "rel_err");
        for (const auto& r : rows)
            std::printf("%-5d %-12.6f %-14.6f %-14.6f %.3e\n", r.mode, r.k, r.mu_numeric, r.mu_analytic, r.rel_err);
    }
    return 0;
}

int cmd_check(const Globals& g)
{
    std::ostringstream report;
    const bool ok = run_check_suite(report, !g.quiet);
    std::cout << report.str();
    return ok ? 0 : 3;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Finite-difference Cahn-Hilliard simulator (4th/6th order, variable a(u))"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--out", g.out, "output directory (overrides output_dir)");
    app.add_option("--seed", g.seed, "seed for the initial noise (overrides initial_seed)");
    app.add_flag("--quiet", g.quiet, "print only errors");
    app.add_option("--snapshot-every", g.snapshot_every, "write a snapshot every n accepted steps")
        ->check(CLI::NonNegativeNumber);

    std::string config, checkpoint, ladder;
    int levels = 3;
    auto* run = app.add_subcommand("run", "simulate one configuration");
    run->add_option("config", config)->required();
    auto* sd = app.add_subcommand("sweep-delta", "sixth-order runs along a delta ladder");
    sd->add_option("config", config)->required();
    sd->add_option("--ladder", ladder, "comma-separated values")->required();
    auto* ss = app.add_subcommand("sweep-sigma", "runs along a sigma ladder");
    ss->add_option("config", config)->required();
    ss->add_option("--ladder", ladder, "comma-separated values")->required();
    auto* rf = app.add_subcommand("refine", "mesh refinement study");
    rf->add_option("config", config)->required();
    rf->add_option("--levels", levels, "number of grids")->check(CLI::Range(2, 8));
    auto* dp = app.add_subcommand("dispersion", "linear decay rates against the analytic symbol");
    dp->add_option("config", config)->required();
    auto* ck = app.add_subcommand("check", "run the built-in invariant suite");
    auto* rs = app.add_subcommand("resume", "continue from a checkpoint");
    rs->add_option("checkpoint", checkpoint)->required();
    rs->add_option("config", config)->required();
    // global flags are accepted after the subcommand too
    for (auto* sub : {run, sd, ss, rf, dp, ck, rs})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*run)
            return cmd_run(config, g);
        if (*sd)
            return cmd_sweep("delta", config, ladder, g);
        if (*ss)
            return cmd_sweep("sigma", config, ladder, g);
        if (*rf)
            return cmd_refine(config, levels, g);
        if (*dp)
            return cmd_dispersion(config, g);
        if (*ck)
            return cmd_check(g);
        if (*rs)
            return cmd_resume(checkpoint, config, g);
    } catch (const ParseError& e) {
        std::cerr << "cli.parse_config: " << e.what() << '\n';
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "validation: " << e.what() << " (keys:";
        for (const auto& k : e.keys)
            std::cerr << ' ' << k;
        std::cerr << ")\n";
        return 1;
    } catch (const StepFailure& e) {
        std::cerr << "stepper.step: " << e.what() << '\n';
        return 2;
    } catch (const SweepFailure& e) {
        std::cerr << "diagnostics.sweep: " << e.what() << '\n';
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "cli.read: " << e.what() << '\n';
        return 1;
    } catch (const NonlinearSpec& e) {
        std::cerr << "diagnostics.dispersion_check: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
