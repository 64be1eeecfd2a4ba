#include <gtest/gtest.h>

#include "jumplab/conditions.hpp"

using namespace jumplab;

namespace {

struct Scalar {
    GridSpace space{1, 2.0, SpaceMode::Euclidean};
    MarkSpace marks{{{"up", 1.0}}};
};

}  // namespace

TEST(Nnls, MatchesBruteForceOnSmallProblem) {
    // y = 2 a - 0 b + noise-free; the negative-coefficient column must be dropped.
    std::vector<double> a{1, 2, 3, 4}, b{1, -1, 1, -1}, y;
    for (std::size_t i = 0; i < a.size(); ++i) y.push_back(2 * a[i] - 0.5 * b[i]);
    const auto x = detail::nnls_small({a, b}, y);
    EXPECT_GE(x[1], 0.0);
    // Brute force over a grid for the same feasible problem.
    double best = INFINITY, bx = 0, by = 0;
    for (double u = 0; u <= 3; u += 0.001)
        for (double v : {0.0}) {
            double s = 0;
            for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(y[i] - u * a[i] - v * b[i], 2);
            if (s < best) best = s, bx = u, by = v;
        }
    EXPECT_NEAR(x[0], bx, 1e-3);
    EXPECT_NEAR(x[1], by, 1e-12);
}

TEST(Conditions, PLaplaceCertificates) {
    GridSpace s(32, 3.0, SpaceMode::Sobolev);
    auto op = MonotoneOperator::p_laplace(s, ScalarFunction::power(3.0));
    MarkSpace marks;
    auto g = JumpCoupling::none(0, s.n());
    DriftSystem sys{op, g, marks};
    const auto mono = check_condition(sys, Condition::Monotone, 1000, 1);
    EXPECT_TRUE(mono.pass);
    EXPECT_GE(mono.min_gap, -1e-9);
    const auto coer = check_condition(sys, Condition::Coercive, 1000, 2);
    EXPECT_TRUE(coer.pass);
    EXPECT_NEAR(coer.constant("alpha1"), 2.0, 1e-6);
    EXPECT_TRUE(check_condition(sys, Condition::Growth, 300, 3).pass);
}

TEST(Conditions, PorousMediaCertificates) {
    GridSpace s(32, 3.0, SpaceMode::Negative);
    auto op = MonotoneOperator::porous_media(s, ScalarFunction::power(3.0));
    MarkSpace marks;
    auto g = JumpCoupling::none(0, s.n());
    DriftSystem sys{op, g, marks};
    EXPECT_TRUE(check_condition(sys, Condition::Monotone, 1000, 1).pass);
    const auto coer = check_condition(sys, Condition::Coercive, 1000, 2);
    EXPECT_TRUE(coer.pass);
    EXPECT_GT(coer.constant("alpha1"), 1e-8);
}

TEST(Conditions, BrokenFluxFailsMonotonicity) {
    GridSpace s(16, 2.0, SpaceMode::Sobolev);
    auto op = MonotoneOperator::p_laplace(s, ScalarFunction::linear(-1.0));
    MarkSpace marks;
    auto g = JumpCoupling::none(0, s.n());
    DriftSystem sys{op, g, marks};
    const auto r = check_condition(sys, Condition::Monotone, 200, 1);
    EXPECT_FALSE(r.pass);
    EXPECT_LT(r.min_gap, 0.0);
    EXPECT_FALSE(check_condition(sys, Condition::Coercive, 200, 1).pass);
}

TEST(Conditions, ZeroDriftIsMonotoneButNotStrict) {
    Scalar sc;
    auto op = MonotoneOperator::custom_fd(sc.space, ScalarFunction::linear(0.0));
    auto g = JumpCoupling::additive({StateVector{1.0}});
    DriftSystem sys{op, g, sc.marks};
    EXPECT_TRUE(check_condition(sys, Condition::Monotone, 100, 1).pass);
    const auto strict = check_condition(sys, Condition::Strict, 100, 1);
    EXPECT_FALSE(strict.pass);
    EXPECT_LT(strict.min_gap, 0.0);
}

TEST(Conditions, StrictRateOfLinearSystem) {
    Scalar sc;
    auto op = MonotoneOperator::custom_fd(sc.space, ScalarFunction::linear());
    auto add = JumpCoupling::additive({StateVector{1.0}});
    const auto r = check_condition({op, add, sc.marks}, Condition::Strict, 200, 1);
    EXPECT_TRUE(r.pass);
    EXPECT_NEAR(r.constant("alpha"), 2.0, 1e-9);
    EXPECT_NEAR(r.constant("eta"), 1.0, 1e-9);
    EXPECT_GE(r.constant("delta_eta"), 1.0);  // x = 0 gives -|g|^2

    // G(x) = 0.5 x: 2|d|^2 - 0.25 |d|^2.
    auto mult = JumpCoupling::mult_scalar({0.5});
    const auto m = check_condition({op, mult, sc.marks}, Condition::Strict, 200, 1);
    EXPECT_TRUE(m.pass);
    EXPECT_NEAR(m.constant("alpha"), 1.75, 1e-9);
}

TEST(Conditions, CoercivityOfScalarOu) {
    Scalar sc;
    auto op = MonotoneOperator::custom_fd(sc.space, ScalarFunction::linear());
    auto add = JumpCoupling::additive({StateVector{1.0}});
    const auto r = check_condition({op, add, sc.marks}, Condition::Coercive, 300, 4);
    EXPECT_TRUE(r.pass);
    EXPECT_NEAR(r.constant("alpha1") - r.constant("alpha0"), 2.0, 1e-9);
    EXPECT_NEAR(r.constant("C0"), 1.0, 1e-9);
    EXPECT_TRUE(check_condition({op, add, sc.marks}, Condition::GBound, 300, 4).pass);
}

TEST(Conditions, SameSeedSameReport) {
    GridSpace s(8, 3.0, SpaceMode::Sobolev);
    auto op = MonotoneOperator::p_laplace(s, ScalarFunction::power(3.0));
    MarkSpace marks;
    auto g = JumpCoupling::none(0, s.n());
    DriftSystem sys{op, g, marks};
    const auto a = check_condition(sys, Condition::Coercive, 100, 9);
    const auto b = check_condition(sys, Condition::Coercive, 100, 9);
    EXPECT_EQ(a.min_gap, b.min_gap);
    EXPECT_EQ(a.fitted, b.fitted);
}

TEST(Conditions, NamesRoundTrip) {
    for (auto c : {Condition::Monotone, Condition::Coercive, Condition::Growth, Condition::GBound,
                   Condition::Strict, Condition::Superlinear})
        EXPECT_EQ(condition_from_string(to_string(c)), c);
    EXPECT_THROW(condition_from_string("MONOTONE"), ConfigError);
}
