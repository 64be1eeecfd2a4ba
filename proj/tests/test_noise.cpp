#include <gtest/gtest.h>

#include <cmath>

#include "jumplab/noise.hpp"

using namespace jumplab;

TEST(MarkSpace, RejectsNonPositiveMass) {
    EXPECT_THROW(MarkSpace({{"a", 0.0}}), ContractViolation);
    EXPECT_THROW(MarkSpace({{"a", -1.0}}), ContractViolation);
    EXPECT_THROW(MarkSpace({{"a", INFINITY}}), ContractViolation);
}

TEST(MarkSpace, DrawFollowsMasses) {
    MarkSpace ms({{"a", 1.0}, {"b", 3.0}});
    EXPECT_DOUBLE_EQ(ms.total_mass(), 4.0);
    EXPECT_EQ(ms.draw(0.0), 0u);
    EXPECT_EQ(ms.draw(0.249), 0u);
    EXPECT_EQ(ms.draw(0.25), 1u);
    EXPECT_EQ(ms.draw(0.999999), 1u);
}

TEST(JumpStream, PoissonCountsAndMarkFrequencies) {
    // Count on [0, T] is Poisson(T m(Z)); marks are multinomial with p_i = m_i / m(Z).
    MarkSpace ms({{"a", 0.5}, {"b", 1.5}});
    const double T = 10.0;
    const int reps = 4000;
    double total = 0.0, total2 = 0.0;
    double count_b = 0.0;
    for (int r = 0; r < reps; ++r) {
        Rng rng = Rng::substream(5, r);
        const auto s = sample_stream(ms, T, rng);
        const double c = static_cast<double>(s.events.size());
        total += c;
        total2 += c * c;
        for (const auto& e : s.events) {
            ASSERT_GT(e.time, 0.0);
            ASSERT_LE(e.time, T);
            if (e.mark == 1) count_b += 1.0;
        }
        for (std::size_t k = 1; k < s.events.size(); ++k)
            ASSERT_LT(s.events[k - 1].time, s.events[k].time);
    }
    const double mean = total / reps;
    const double var = total2 / reps - mean * mean;
    const double lambda = T * ms.total_mass();
    EXPECT_NEAR(mean, lambda, 4.0 * std::sqrt(lambda / reps));
    EXPECT_NEAR(var, lambda, 0.1 * lambda);
    const double pb = count_b / total;
    EXPECT_NEAR(pb, 0.75, 4.0 * std::sqrt(0.75 * 0.25 / total));
}

TEST(JumpStream, ReproducibleFromSeed) {
    MarkSpace ms({{"a", 2.0}});
    Rng r1(9), r2(9);
    const auto a = sample_stream(ms, 5.0, r1);
    const auto b = sample_stream(ms, 5.0, r2);
    ASSERT_EQ(a.events.size(), b.events.size());
    for (std::size_t i = 0; i < a.events.size(); ++i) EXPECT_EQ(a.events[i].time, b.events[i].time);
    EXPECT_EQ(a.seed_key, b.seed_key);
    Rng r3(1);
    EXPECT_THROW(sample_stream(ms, 0.0, r3), ContractViolation);
}

TEST(Coupling, NormsAndCompensator) {
    GridSpace s(4, 2.0, SpaceMode::Sobolev);
    MarkSpace ms({{"a", 2.0}, {"b", 0.5}});
    auto add = JumpCoupling::additive({StateVector{1, 0, 0, 0}, StateVector{0, 2, 0, 0}});
    const StateVector x{1, 1, 1, 1};
    // 2 * h * 1 + 0.5 * h * 4
    EXPECT_NEAR(g_norm_sq(s, add, ms, x), 4.0 * s.h(), 1e-15);
    EXPECT_EQ(g_diff_norm_sq(s, add, ms, x, StateVector(4)), 0.0);
    const auto c = compensator_drift(add, ms, x);
    EXPECT_DOUBLE_EQ(c[0], 2.0);
    EXPECT_DOUBLE_EQ(c[1], 1.0);

    auto mult = JumpCoupling::mult_scalar({0.5, -1.0});
    const StateVector y{0, 1, 0, 0};
    EXPECT_NEAR(g_diff_norm_sq(s, mult, ms, x, y), (2.0 * 0.25 + 0.5) * s.h() * 3.0, 1e-14);
    const auto jd = compensator_drift_jacobian_diag(mult, ms, x);
    EXPECT_DOUBLE_EQ(jd[2], 2.0 * 0.5 - 0.5);
}

TEST(Coupling, LipschitzProfileRequired) {
    EXPECT_THROW(JumpCoupling::mult_lipschitz({1.0}, ScalarFunction::cubic()), ContractViolation);
    auto g = JumpCoupling::mult_lipschitz({2.0}, ScalarFunction::tanh());
    EXPECT_DOUBLE_EQ(g.lipschitz(0), 2.0);
    EXPECT_NEAR(g.evaluate(0, StateVector{0.5})[0], 2.0 * std::tanh(0.5), 1e-15);
}

TEST(Coupling, MarkCountMismatchRejected) {
    GridSpace s(4, 2.0, SpaceMode::Sobolev);
    MarkSpace ms({{"a", 1.0}});
    auto add = JumpCoupling::additive({StateVector(4), StateVector(4)});
    EXPECT_THROW(add.check(s, ms), ContractViolation);
    auto bad = JumpCoupling::additive({StateVector(3)});
    EXPECT_THROW(bad.check(s, ms), ContractViolation);
}
