#include "nlch/stepper.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace nlch;

namespace {

ModelParams fourth_log(double sigma = 1e-2, double lambda = 3.0)
{
    ModelParams p;
    p.mode = Mode::Fourth;
    p.sigma = sigma;
    p.potential = PotentialSpec::logarithmic(lambda);
    p.coefficient = CoefficientSpec::constant(1e-3);
    return p;
}

StepperConfig cfg(double tau, double t_end)
{
    StepperConfig c;
    c.tau = tau;
    c.t_end = t_end;
    return c;
}

Field noise(const Domain& d, std::uint64_t seed, double mean_value = 0.0, double amp = 0.05)
{
    return make_initial(init::SeededNoise{mean_value, amp, seed}, d);
}

} // namespace

TEST(StepperConfig, Validation)
{
    StepperConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_DOUBLE_EQ(c.effective_tau_min(), c.tau / 1024);
    c.tau = 0.0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = StepperConfig{};
    c.tau_min = 2 * c.tau;
    EXPECT_THROW(c.validate(), ValidationError);
    c = StepperConfig{};
    c.newton_max = 0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = StepperConfig{};
    c.krylov_tol = -1;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Step, SolvesTheDiscreteSystem)
{
    const Domain d = Domain::line(64);
    for (Mode m : {Mode::Fourth, Mode::Sixth, Mode::PhaseField}) {
        ModelParams p = fourth_log();
        p.mode = m;
        p.coefficient = CoefficientSpec::even_quadratic(1e-3, 5e-4);
        if (m == Mode::Sixth)
            p.delta = 1e-7;
        const ImplicitStepper st(p, cfg(1e-4, 1e-4));
        const SimState s0 = st.initial_state(noise(d, 1));
        const auto [s1, rep] = st.step(s0);
        EXPECT_TRUE(rep.accepted);
        EXPECT_DOUBLE_EQ(s1.t, 1e-4);
        EXPECT_GE(rep.newton_iters, 1);
        const auto [r1, r2] = residual(s1, s0, rep.tau_used, p);
        EXPECT_LE(norm_l2(r1) + norm_l2(r2), 1e-7) << "mode " << static_cast<int>(m);
        EXPECT_LE(rep.energy_after, rep.energy_before + 1e-12);
    }
}

TEST(Step, ConstantStateIsStationary)
{
    const Domain d = Domain::square(8);
    const ImplicitStepper st(fourth_log(), cfg(1e-3, 1e-3));
    const SimState s0 = st.initial_state(Field(d, -0.3));
    const auto [s1, rep] = st.step(s0);
    EXPECT_LE((s1.u - s0.u).max_abs(), 1e-13);
    EXPECT_LE((s1.w - s0.w).max_abs(), 1e-10);
}

TEST(Step, RejectsBadStates)
{
    const Domain d = Domain::line(16);
    const ImplicitStepper st(fourth_log(0.0), cfg(1e-4, 1e-4));
    Field u(d, 0.1);
    u[2] = 1.0;
    EXPECT_THROW(st.step(SimState{0, u, Field(d)}), DomainViolation);
    u[2] = std::nan("");
    EXPECT_THROW(st.step(SimState{0, u, Field(d)}), std::invalid_argument);
}

TEST(Step, FailureCarriesDetails)
{
    const Domain d = Domain::line(32);
    StepperConfig c = cfg(1e-2, 1e-2);
    c.newton_max = 1;
    c.newton_tol = 1e-300;
    c.tau_min = 5e-3;
    const ImplicitStepper st(fourth_log(), c);
    const SimState s0 = st.initial_state(noise(d, 2, 0.0, 0.2));
    try {
        st.step(s0);
        FAIL() << "expected StepFailure";
    } catch (const StepFailure& e) {
        EXPECT_LT(e.tau, 5e-3);
        EXPECT_TRUE(std::isfinite(e.last_residual));
    }
    const RunResult r = run(s0, c, fourth_log());
    EXPECT_FALSE(r.ok());
    EXPECT_EQ(r.final_state.t, 0.0);
    EXPECT_EQ(r.diagnostics.records.size(), 1u);
}

TEST(Run, ConservesMassAndDissipates)
{
    const Domain d = Domain::line(64);
    const RunResult r = run(noise(d, 3, 0.1), cfg(1e-4, 5e-3), fourth_log());
    ASSERT_TRUE(r.ok());
    const auto& rec = r.diagnostics.records;
    for (std::size_t i = 1; i < rec.size(); ++i) {
        EXPECT_NEAR(rec[i].mass, rec[0].mass, 1e-12);
        EXPECT_LE(rec[i].energy, rec[i - 1].energy + 1e-9);
    }
    EXPECT_NEAR(r.final_state.t, 5e-3, 1e-15);
    EXPECT_EQ(r.steps.size(), 50u);
}

TEST(Run, PhaseFieldConservesGeneralisedMass)
{
    const Domain d = Domain::square(16);
    ModelParams p = fourth_log(0.1);
    p.mode = Mode::PhaseField;
    const RunResult r = run(noise(d, 4, -0.2), cfg(1e-3, 2e-2), p);
    ASSERT_TRUE(r.ok());
    const auto cons = [&](const SimState& s) { return mean(s.u) + 0.1 * mean(s.w); };
    const double c0 = cons(r.trajectory.front());
    for (const auto& s : r.trajectory)
        EXPECT_NEAR(cons(s), c0, 1e-12);
}

TEST(Run, RecordingCadenceAndCallbacks)
{
    const Domain d = Domain::line(32);
    RunOptions o = record_every(4);
    o.checkpoint_every = 5;
    const auto dir = std::filesystem::temp_directory_path() / "nlch_test_ckpt";
    std::filesystem::remove_all(dir);
    o.checkpoint_dir = dir.string();
    long calls = 0;
    o.on_step = [&](const SimState&, long i) { EXPECT_EQ(i, ++calls); };
    const RunResult r = run(noise(d, 5), cfg(1e-4, 1e-3), fourth_log(), o);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(calls, 10);
    // records at 0, 4, 8 and the final step
    ASSERT_EQ(r.diagnostics.records.size(), 4u);
    EXPECT_EQ(r.trajectory.size(), 4u);
    EXPECT_NEAR(r.diagnostics.records[1].t, 4e-4, 1e-15);
    EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint_00000005.chkp"));
    EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint_00000010.chkp"));
    const Checkpoint ck = read_checkpoint((dir / "checkpoint_00000010.chkp").string());
    EXPECT_EQ(ck.u.values(), r.final_state.u.values());
    std::filesystem::remove_all(dir);
    EXPECT_THROW(run(noise(d, 5), cfg(1e-4, 1e-3), fourth_log(), record_every(0)), ValidationError);
}

TEST(Run, LastStepLandsOnTEnd)
{
    const Domain d = Domain::line(16);
    const RunResult r = run(noise(d, 6), cfg(3e-4, 1e-3), fourth_log());
    ASSERT_TRUE(r.ok());
    EXPECT_DOUBLE_EQ(r.final_state.t, 1e-3);
    EXPECT_EQ(r.steps.size(), 4u);
    EXPECT_NEAR(r.steps.back().tau_used, 1e-4, 1e-12);
}

TEST(Run, Deterministic)
{
    const Domain d = Domain::square(16);
    const RunResult a = run(noise(d, 7), cfg(1e-4, 1e-3), fourth_log());
    const RunResult b = run(noise(d, 7), cfg(1e-4, 1e-3), fourth_log());
    EXPECT_EQ(a.final_state.u.values(), b.final_state.u.values());
    EXPECT_EQ(a.final_state.w.values(), b.final_state.w.values());
}

TEST(Run, PreconditionersAgree)
{
    const Domain d = Domain::line(48);
    ModelParams p = fourth_log();
    p.coefficient = CoefficientSpec::even_quadratic(1e-3, 1e-3);
    StepperConfig a = cfg(1e-4, 1e-3), b = a;
    b.preconditioner = Preconditioner::Spectral;
    const RunResult ra = run(noise(d, 8), a, p);
    const RunResult rb = run(noise(d, 8), b, p);
    ASSERT_TRUE(ra.ok());
    ASSERT_TRUE(rb.ok());
    EXPECT_LE((ra.final_state.u - rb.final_state.u).max_abs(), 1e-8);
}

TEST(Run, GuardedSingularRunStaysInside)
{
    const Domain d = Domain::line(64);
    ModelParams p = fourth_log(0.0, 4.0);
    const RunResult r = run(noise(d, 9, 0.0, 0.3), cfg(1e-4, 5e-3), p);
    ASSERT_TRUE(r.ok()) << *r.failure;
    for (const auto& rec : r.diagnostics.records)
        EXPECT_LT(rec.sup_u, 1.0);
}

TEST(Explicit, MatchesImplicitAtSmallTau)
{
    const Domain d = Domain::line(32);
    const ModelParams p = fourth_log();
    const Field u0 = noise(d, 10);
    double tau_rk = 0;
    const Field ref = explicit_oracle_auto(u0, 2e-4, p, &tau_rk);
    EXPECT_LE(tau_rk, explicit_step_bound(d, p));
    const RunResult r = run(u0, cfg(1e-5, 2e-4), p);
    ASSERT_TRUE(r.ok());
    EXPECT_LE(norm_l2(r.final_state.u - ref), 0.05 * norm_l2(ref - u0) + 1e-12);
}

TEST(Explicit, ConservesMean)
{
    const Domain d = Domain::square(16);
    const Field u0 = noise(d, 12, 0.2);
    const Field u = explicit_oracle_auto(u0, 1e-4, fourth_log());
    EXPECT_NEAR(mean(u), mean(u0), 1e-10);
}

TEST(Explicit, RejectsPhaseField)
{
    ModelParams p = fourth_log(0.1);
    p.mode = Mode::PhaseField;
    EXPECT_THROW(explicit_oracle(Field(Domain::line(8)), 1e-6, 1e-5, p), std::invalid_argument);
}

TEST(Explicit, DetectsBlowUp)
{
    const Domain d = Domain::line(64);
    ModelParams p = fourth_log();
    p.coefficient = CoefficientSpec::constant(1.0);
    EXPECT_THROW(explicit_oracle(noise(d, 11), 1e-3, 0.5, p), Instability);
}
