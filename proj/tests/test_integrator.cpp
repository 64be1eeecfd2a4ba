#include <gtest/gtest.h>

#include <cmath>

#include "jumplab/integrator.hpp"

using namespace jumplab;

namespace {

GridSpace scalar_space() { return GridSpace(1, 2.0, SpaceMode::Euclidean); }

StateVector random_state(std::size_t n, Rng& rng, double scale = 1.0) {
    StateVector v(n);
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

}  // namespace

TEST(ImplicitStep, ScalarCubicRoot) {
    // w + w^3 = 2 has the unique real root w = 1.
    const auto s = scalar_space();
    auto op = MonotoneOperator::custom_fd(s, ScalarFunction::cubic());
    MarkSpace marks;
    auto g = JumpCoupling::none(0, 1);
    const auto w = implicit_step(op, g, marks, StateVector{2.0}, 1.0, 1e-14);
    EXPECT_NEAR(w[0], 1.0, 1e-10);
}

TEST(ImplicitStep, PicardAgreesWithNewton) {
    const auto s = scalar_space();
    auto cubic = ScalarFunction::cubic();
    auto newton = MonotoneOperator::custom_fd(s, cubic);
    auto picard = MonotoneOperator::custom_map(
        s, [](std::span<const double> u, std::span<double> out) { out[0] = u[0] * u[0] * u[0]; });
    MarkSpace marks;
    auto g = JumpCoupling::none(0, 1);
    const auto a = implicit_step(newton, g, marks, StateVector{2.0}, 1.0, 1e-13, 200);
    const auto b = implicit_step(picard, g, marks, StateVector{2.0}, 1.0, 1e-13, 2000);
    EXPECT_NEAR(a[0], b[0], 1e-10);
}

TEST(ImplicitStep, LinearDiffusionMatchesDirectSolve) {
    GridSpace s(25, 2.0, SpaceMode::Sobolev);
    auto op = MonotoneOperator::linear_diffusion(s);
    MarkSpace marks;
    auto g = JumpCoupling::none(0, s.n());
    Rng rng(1);
    const auto u = random_state(s.n(), rng);
    const double dt = 0.01;
    const auto w = implicit_step(op, g, marks, u, dt, 1e-14);
    const auto ref = solve_tridiagonal(neg_laplacian_matrix(s, dt, 1.0), u.values());
    for (std::size_t i = 0; i < s.n(); ++i) EXPECT_NEAR(w[i], ref[i], 1e-10);
}

TEST(ImplicitStep, ResolventIsNonexpansive) {
    GridSpace s(16, 3.0, SpaceMode::Sobolev);
    auto op = MonotoneOperator::p_laplace(s, ScalarFunction::power(3.0));
    MarkSpace marks;
    auto g = JumpCoupling::none(0, s.n());
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        const auto a = random_state(s.n(), rng, 2.0);
        const auto b = random_state(s.n(), rng, 2.0);
        const auto wa = implicit_step(op, g, marks, a, 1e-3, 1e-13);
        const auto wb = implicit_step(op, g, marks, b, 1e-3, 1e-13);
        EXPECT_LE(norm_h(s, wa - wb), norm_h(s, a - b) * (1.0 + 1e-9));
    }
}

TEST(ImplicitStep, NonConvergenceCarriesState) {
    const auto s = scalar_space();
    auto op = MonotoneOperator::custom_fd(s, ScalarFunction::cubic());
    MarkSpace marks;
    auto g = JumpCoupling::none(0, 1);
    ImplicitStepper stepper(op, g, marks, 1e-15, 1, 0);
    StateVector u{50.0};
    try {
        stepper.step(u, 1.0, 0.25);
        FAIL() << "expected NonConverged";
    } catch (const NonConverged& e) {
        EXPECT_EQ(e.time(), 0.25);
        ASSERT_EQ(e.state().size(), 1u);
        EXPECT_EQ(e.state()[0], 50.0);
        EXPECT_GT(e.residual(), 0.0);
    }
}

TEST(ImplicitStep, HalvingRecoversFromHardStep) {
    const auto s = scalar_space();
    auto op = MonotoneOperator::custom_fd(s, ScalarFunction::cubic());
    MarkSpace marks;
    auto g = JumpCoupling::none(0, 1);
    ImplicitStepper stepper(op, g, marks, 1e-12, 6, 12);
    StateVector u{100.0};
    const auto st = stepper.step(u, 1.0);
    EXPECT_GT(st.halvings, 0);
    EXPECT_TRUE(std::isfinite(u[0]));
    EXPECT_LT(std::abs(u[0]), 100.0);
}

TEST(Simulate, DeterministicLinearContraction) {
    // No jumps: u_k = x (1 + dt)^{-k}.
    const auto s = scalar_space();
    auto op = MonotoneOperator::custom_fd(s, ScalarFunction::linear());
    MarkSpace marks;
    auto g = JumpCoupling::none(0, 1);
    SimConfig cfg;
    cfg.dt_max = 0.01;
    cfg.horizon = 1.0;
    cfg.solver_tol = 1e-14;
    const auto rec = simulate(op, g, marks, StateVector{3.0}, cfg);
    ASSERT_EQ(rec.times.size(), 101u);
    for (std::size_t k = 0; k < rec.times.size(); ++k)
        EXPECT_NEAR(rec.h_norms[k], 3.0 * std::pow(1.01, -static_cast<double>(k)), 1e-12);
}

TEST(Simulate, JumpBookkeepingAndGridTimes) {
    const auto s = scalar_space();
    auto op = MonotoneOperator::custom_fd(s, ScalarFunction::linear());
    MarkSpace marks({{"up", 3.0}});
    auto g = JumpCoupling::additive({StateVector{1.0}});
    SimConfig cfg;
    cfg.dt_max = 0.05;
    cfg.horizon = 2.0;
    cfg.seed = 4;
    const auto rec = simulate(op, g, marks, StateVector{0.0}, cfg);
    EXPECT_GT(rec.jump_count, 0u);
    for (const auto& j : rec.jumps) EXPECT_LE(j.bookkeeping_error, 1e-15);
    for (std::size_t k = 1; k < rec.times.size(); ++k) EXPECT_LE(rec.times[k - 1], rec.times[k]);
    EXPECT_DOUBLE_EQ(rec.times.back(), 2.0);
}

TEST(Simulate, DiscreteEnergyInequality) {
    // G = 0: |u_{k+1}|^2 - |u_k|^2 <= -2 dt <A u_{k+1}, u_{k+1}> + slack.
    GridSpace s(16, 3.0, SpaceMode::Sobolev);
    auto op = MonotoneOperator::p_laplace(s, ScalarFunction::power(3.0));
    MarkSpace marks;
    auto g = JumpCoupling::none(0, s.n());
    ImplicitStepper stepper(op, g, marks, 1e-12, 50);
    Rng rng(3);
    StateVector u = random_state(s.n(), rng);
    const double dt = 1e-3;
    for (int k = 0; k < 200; ++k) {
        const double before = std::pow(norm_h(s, u), 2);
        stepper.step(u, dt);
        const double after = std::pow(norm_h(s, u), 2);
        EXPECT_LE(after - before, -2.0 * dt * pairing_with_self(op, u) + 1e-9 * (1 + before));
    }
}

TEST(Ensemble, OuMomentFollowsMomentOde) {
    // d E X^2 / dt = -2 E X^2 + 1 for A(x) = x, unit jumps at rate 1.
    const auto s = scalar_space();
    auto op = MonotoneOperator::custom_fd(s, ScalarFunction::linear());
    MarkSpace marks({{"up", 1.0}});
    auto g = JumpCoupling::additive({StateVector{1.0}});
    SimConfig cfg;
    cfg.dt_max = 1e-2;
    cfg.horizon = 2.0;
    cfg.seed = 11;
    EnsembleOptions opts;
    opts.members = 2000;
    opts.keep_checkpoints = false;
    const auto ens = simulate_ensemble(op, g, marks, fixed_initial(StateVector{0.0}), cfg, opts);
    for (std::size_t k = 0; k < ens.times.size(); k += 50) {
        const double t = ens.times[k];
        const double exact = 0.5 * (1.0 - std::exp(-2.0 * t));
        EXPECT_NEAR(ens.h2.mean[k], exact, 4.0 * ens.h2.se[k] + 0.02 * exact) << t;
    }
    EXPECT_EQ(ens.aborted, 0u);
}

TEST(Ensemble, BitwiseDeterministicAcrossThreadCounts) {
    GridSpace s(8, 3.0, SpaceMode::Sobolev);
    auto op = MonotoneOperator::p_laplace(s, ScalarFunction::power(3.0));
    MarkSpace marks({{"a", 1.0}, {"b", 0.5}});
    StateVector g1(8), g2(8);
    g1[2] = 1.0;
    g2[5] = -2.0;
    auto g = JumpCoupling::additive({g1, g2});
    SimConfig cfg;
    cfg.dt_max = 0.01;
    cfg.horizon = 0.5;
    cfg.seed = 5;
    EnsembleOptions opts;
    opts.members = 20;
    InitialSampler sampler = [](Rng& r) {
        StateVector x(8);
        for (auto& v : x) v = r.normal();
        return x;
    };
    const auto a = simulate_ensemble(op, g, marks, sampler, cfg, opts);
    opts.threads = 3;
    const auto b = simulate_ensemble(op, g, marks, sampler, cfg, opts);
    EXPECT_EQ(a.h2.mean, b.h2.mean);
    EXPECT_EQ(a.h2.se, b.h2.se);
    ASSERT_EQ(a.terminal.size(), b.terminal.size());
    for (std::size_t i = 0; i < a.terminal.size(); ++i) EXPECT_EQ(a.terminal[i], b.terminal[i]);
}

TEST(Ensemble, CoupledLinearDistanceIsExact) {
    // Additive noise cancels: |u - v|^2 = |x - y|^2 (1 + dt)^{-2k}. Jump times
    // split grid steps, which perturbs the factor at O(dt^2) per split.
    const auto s = scalar_space();
    auto op = MonotoneOperator::custom_fd(s, ScalarFunction::linear());
    MarkSpace marks({{"up", 1.0}});
    auto g = JumpCoupling::additive({StateVector{1.0}});
    SimConfig cfg;
    cfg.dt_max = 0.01;
    cfg.horizon = 1.0;
    cfg.solver_tol = 1e-14;
    const auto c = simulate_coupled_ensemble(op, g, marks, fixed_initial(StateVector{1.0}),
                                             fixed_initial(StateVector{-1.0}), cfg, 10);
    EXPECT_EQ(c.monotone_violations, 0u);
    EXPECT_NEAR(c.initial_msd, 4.0, 1e-15);
    for (std::size_t k = 0; k < c.times.size(); ++k)
        EXPECT_NEAR(c.msd.mean[k], 4.0 * std::pow(1.01, -2.0 * k), 1e-4 * c.msd.mean[k]);
}

TEST(Ensemble, CoupledDistanceWithoutJumpsIsBitExactRecurrence) {
    const GridSpace s = scalar_space();
    auto op = MonotoneOperator::custom_fd(s, ScalarFunction::linear());
    MarkSpace marks;
    auto g = JumpCoupling::none(0, 1);
    SimConfig cfg;
    cfg.dt_max = 0.01;
    cfg.horizon = 1.0;
    cfg.solver_tol = 1e-14;
    const auto c = simulate_coupled_ensemble(op, g, marks, fixed_initial(StateVector{1.0}),
                                             fixed_initial(StateVector{-1.0}), cfg, 3);
    for (std::size_t k = 0; k < c.times.size(); ++k)
        EXPECT_NEAR(c.msd.mean[k], 4.0 * std::pow(1.01, -2.0 * k), 1e-12);
}

TEST(SimConfig, RejectsBadValues) {
    SimConfig cfg;
    cfg.dt_max = 0.0;
    EXPECT_THROW(cfg.validate(), ContractViolation);
    cfg.dt_max = 2.0;
    cfg.horizon = 1.0;
    EXPECT_THROW(cfg.validate(), ContractViolation);
}
