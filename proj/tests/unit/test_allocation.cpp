#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "snella/allocation/budget.hpp"
#include "snella/allocation/importance.hpp"
#include "snella/allocation/sparsify.hpp"
#include "snella/autodiff/gradcheck.hpp"
#include "test_util.hpp"

using namespace snella;
using ad::Tensor;

TEST(Sensitivity, ZeroGradientGivesZero) {
    Tensor p = Tensor::matrix({{1, -2}, {3, 4}});
    EXPECT_EQ(sensitivity(p, Tensor::zeros({2, 2})), Tensor::zeros({2, 2}));
}

TEST(Sensitivity, AbsoluteProduct) {
    EXPECT_EQ(sensitivity(Tensor::matrix({{2}}), Tensor::matrix({{-3}})), Tensor::matrix({{6}}));
}

TEST(Sensitivity, MatchesElementwiseOracle) {
    std::mt19937_64 rng(1);
    Tensor p = test::random_tensor({3, 2}, rng), g = test::random_tensor({3, 2}, rng);
    Tensor s = sensitivity(p, g);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(s.at(i, j), std::fabs(g.at(i, j) * p.at(i, j)));
    EXPECT_THROW(sensitivity(p, Tensor({2, 3})), std::invalid_argument);
}

TEST(Importance, ConstantStreamIsFixedPoint) {
    std::mt19937_64 rng(2);
    for (double beta : {0.0, 0.3, 0.85, 1.0}) {
        ImportanceState st{beta, beta};
        Tensor ia = test::random_tensor({4, 2}, rng, 0, 1), ib = test::random_tensor({3, 2}, rng, 0, 1);
        for (int t = 0; t < 20; ++t) {
            update_importance(st, ia, ib);
            EXPECT_EQ(st.sens_a, ia);
            EXPECT_EQ(st.unc_a, Tensor::zeros({4, 2}));
            EXPECT_EQ(st.unc_b, Tensor::zeros({3, 2}));
        }
        EXPECT_EQ(st.steps, 20u);
    }
}

TEST(Importance, NoSmoothingTracksRawValues) {
    std::mt19937_64 rng(3);
    ImportanceState st{0.0, 0.0};
    for (int t = 0; t < 5; ++t) {
        Tensor ia = test::random_tensor({2, 2}, rng, 0, 1), ib = test::random_tensor({2, 2}, rng, 0, 1);
        update_importance(st, ia, ib);
        EXPECT_EQ(st.sens_a, ia);
        EXPECT_EQ(st.sens_b, ib);
        EXPECT_EQ(st.unc_a, Tensor::zeros({2, 2}));
    }
}

TEST(Importance, AlternatingStreamMatchesScalarRecurrence) {
    const double b1 = 0.85, b2 = 0.85;
    ImportanceState st{b1, b2};
    double sbar = 0.0, ubar = 0.0;
    for (int t = 0; t < 10; ++t) {
        const double raw = t % 2 == 0 ? 0.0 : 1.0;
        if (t == 0) {
            sbar = raw;
            ubar = 0.0;
        } else {
            sbar = b1 * sbar + (1 - b1) * raw;
            ubar = b2 * ubar + (1 - b2) * std::fabs(sbar - raw);
        }
        update_importance(st, Tensor::matrix({{raw}}), Tensor::matrix({{raw}}));
        EXPECT_DOUBLE_EQ(st.sens_a[0], sbar) << t;
        EXPECT_DOUBLE_EQ(st.unc_a[0], ubar) << t;
        EXPECT_GE(st.unc_a[0], 0.0);
    }
    // Closed form: only the odd steps contribute, each decayed by its age.
    double closed = 0.0;
    for (int t = 1; t < 10; t += 2) closed += (1 - b1) * std::pow(b1, 9 - t);
    EXPECT_NEAR(st.sens_a[0], closed, 1e-12);
}

TEST(Importance, ShapeMismatchRejected) {
    ImportanceState st;
    update_importance(st, Tensor({2, 2}), Tensor({3, 2}));
    EXPECT_THROW(update_importance(st, Tensor({2, 3}), Tensor({3, 2})), std::invalid_argument);
}

TEST(LayerScore, FreshSensitivityIsZero) {
    std::mt19937_64 rng(4);
    ImportanceState st;
    update_importance(st, test::random_tensor({3, 2}, rng, 0, 1), test::random_tensor({4, 2}, rng, 0, 1));
    EXPECT_EQ(layer_score(ImportanceMetric::Sensitivity, {.state = &st}), 0.0);
}

TEST(LayerScore, MagnitudeOfFactors) {
    Tensor a = Tensor::matrix({{1, -1}}), b = Tensor::matrix({{2, 2}});
    EXPECT_DOUBLE_EQ(layer_score(ImportanceMetric::Magnitude, {.A = &a, .B = &b}), 3.0);
}

TEST(LayerScore, SensitivityMatchesBruteForce) {
    std::mt19937_64 rng(5);
    ImportanceState st;
    for (int t = 0; t < 6; ++t)
        update_importance(st, test::random_tensor({5, 3}, rng, 0, 1), test::random_tensor({4, 3}, rng, 0, 1));
    double want_a = 0, want_b = 0;
    for (std::size_t i = 0; i < 15; ++i) want_a += st.sens_a[i] * st.unc_a[i];
    for (std::size_t i = 0; i < 12; ++i) want_b += st.sens_b[i] * st.unc_b[i];
    EXPECT_NEAR(layer_score(ImportanceMetric::Sensitivity, {.state = &st}), want_a / 15 + want_b / 12, 1e-15);
}

TEST(LayerScore, MissingInputsRejected) {
    ImportanceState fresh;
    EXPECT_THROW(layer_score(ImportanceMetric::Sensitivity, {.state = &fresh}), std::invalid_argument);
    EXPECT_THROW(layer_score(ImportanceMetric::Sensitivity, {}), std::invalid_argument);
    EXPECT_THROW(layer_score(ImportanceMetric::Magnitude, {}), std::invalid_argument);
    EXPECT_THROW(layer_score(ImportanceMetric::WMagnitude, {}), std::invalid_argument);
    Tensor w = Tensor::matrix({{-1, 3}});
    EXPECT_DOUBLE_EQ(layer_score(ImportanceMetric::WMagnitude, {.merged = &w}), 2.0);
}

TEST(Schedule, Endpoints) {
    for (auto kind : {ScheduleKind::Linear, ScheduleKind::Quadratic, ScheduleKind::Cubic}) {
        BudgetSchedule s{1000, 37, 10, kind};
        EXPECT_EQ(budget_at(s, 0), 1000);
        EXPECT_EQ(budget_at(s, 10), 37);
    }
    BudgetSchedule c{1000, 300, 10, ScheduleKind::Constant};
    for (int t = 0; t <= 10; ++t) EXPECT_EQ(budget_at(c, t), 300);
}

TEST(Schedule, Midpoints) {
    EXPECT_EQ(budget_at({1000, 0, 10, ScheduleKind::Cubic}, 5), 125);
    EXPECT_EQ(budget_at({1000, 0, 10, ScheduleKind::Quadratic}, 5), 250);
    EXPECT_EQ(budget_at({1000, 0, 10, ScheduleKind::Linear}, 5), 500);
}

TEST(Schedule, HalvesRoundUp) {
    // 1339 + (19/114) 15627 = 3943.5 exactly; floating point lands just below the half
    EXPECT_EQ(budget_at({16966, 1339, 114, ScheduleKind::Linear}, 95), 3944);
    EXPECT_EQ(budget_at({3, 0, 2, ScheduleKind::Linear}, 1), 2);
    EXPECT_EQ(budget_at({4, 0, 4, ScheduleKind::Cubic}, 2), 1);  // 0.5
}

TEST(Schedule, OutOfRangeStep) {
    BudgetSchedule s{100, 10, 5, ScheduleKind::Cubic};
    EXPECT_THROW(budget_at(s, -1), std::out_of_range);
    EXPECT_THROW(budget_at(s, 6), std::out_of_range);
    EXPECT_THROW(budget_at({10, 20, 5, ScheduleKind::Cubic}, 0), std::invalid_argument);
}

TEST(Schedule, MonotoneAndOrdered) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const std::int64_t b0 = std::uniform_int_distribution<std::int64_t>(1, 100000)(rng);
        const std::int64_t bT = std::uniform_int_distribution<std::int64_t>(0, b0)(rng);
        const std::int64_t T = std::uniform_int_distribution<std::int64_t>(1, 500)(rng);
        for (auto kind : {ScheduleKind::Constant, ScheduleKind::Linear, ScheduleKind::Quadratic, ScheduleKind::Cubic}) {
            BudgetSchedule s{b0, bT, T, kind};
            for (std::int64_t t = 1; t <= T; ++t) EXPECT_LE(budget_at(s, t), budget_at(s, t - 1));
        }
        for (std::int64_t t = 1; t < T; ++t) {
            const auto c = budget_at({b0, bT, T, ScheduleKind::Cubic}, t);
            const auto q = budget_at({b0, bT, T, ScheduleKind::Quadratic}, t);
            const auto l = budget_at({b0, bT, T, ScheduleKind::Linear}, t);
            EXPECT_LE(c, q);
            EXPECT_LE(q, l);
        }
    }
}

TEST(Alloc, SingleLayer) {
    std::vector<double> p{0.4};
    std::vector<std::int64_t> cap{50};
    EXPECT_EQ(alloc(p, cap, 30).budgets, (std::vector<std::int64_t>{30}));
    auto over = alloc(p, cap, 80);
    EXPECT_EQ(over.budgets, (std::vector<std::int64_t>{50}));
    EXPECT_TRUE(over.clamped);
}

TEST(Alloc, OnePassTrace) {
    std::vector<double> p{0.75, 0.25};
    std::vector<std::int64_t> cap{100, 100};
    EXPECT_EQ(alloc(p, cap, 80).budgets, (std::vector<std::int64_t>{60, 20}));
}

TEST(Alloc, TwoPassTraceReallocatesOverflow) {
    std::vector<double> p{0.9, 0.1};
    std::vector<std::int64_t> cap{50, 100};
    EXPECT_EQ(alloc(p, cap, 80).budgets, (std::vector<std::int64_t>{50, 30}));
}

TEST(Alloc, EqualScoresSplitEvenly) {
    std::vector<double> p(4, 0.7);
    std::vector<std::int64_t> cap(4, 100);
    EXPECT_EQ(alloc(p, cap, 200).budgets, (std::vector<std::int64_t>(4, 50)));
}

TEST(Alloc, ZeroScoreLayerOnlyGetsRemainder) {
    std::vector<double> p{0.0, 1.0, 2.0};
    std::vector<std::int64_t> cap{100, 100, 100};
    EXPECT_EQ(alloc(p, cap, 90).budgets, (std::vector<std::int64_t>{0, 30, 60}));
    // 1/3 and 2/3 of 91 floor to 30 and 60; the stray unit goes to the top-scored layer.
    EXPECT_EQ(alloc(p, cap, 91).budgets, (std::vector<std::int64_t>{0, 30, 61}));
    // Positive-score layers saturate; the remainder then spills to the zero-score layer.
    std::vector<std::int64_t> small{100, 10, 10};
    EXPECT_EQ(alloc(p, small, 50).budgets, (std::vector<std::int64_t>{30, 10, 10}));
}

TEST(Alloc, AllZeroScoresFallBackToEvenSplit) {
    std::vector<double> p(3, 0.0);
    std::vector<std::int64_t> cap{5, 100, 100};
    EXPECT_EQ(alloc(p, cap, 25).budgets, (std::vector<std::int64_t>{5, 10, 10}));
}

TEST(Alloc, InvalidInputs) {
    std::vector<double> p{1.0, -0.5};
    std::vector<std::int64_t> cap{10, 10};
    EXPECT_THROW(alloc(p, cap, 5), std::invalid_argument);
    std::vector<double> ok{1.0, 0.5};
    EXPECT_THROW(alloc(ok, cap, -1), std::invalid_argument);
    std::vector<std::int64_t> short_cap{10};
    EXPECT_THROW(alloc(ok, short_cap, 5), std::invalid_argument);
}

TEST(Alloc, FuzzedConservationAndCaps) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t L = std::uniform_int_distribution<std::size_t>(1, 16)(rng);
        std::vector<double> p(L);
        std::vector<std::int64_t> cap(L);
        for (std::size_t l = 0; l < L; ++l) {
            p[l] = std::bernoulli_distribution(0.15)(rng) ? 0.0 : std::uniform_real_distribution<double>(0, 10)(rng);
            cap[l] = std::uniform_int_distribution<std::int64_t>(0, 5000)(rng);
        }
        const std::int64_t total = std::accumulate(cap.begin(), cap.end(), std::int64_t{0});
        const std::int64_t b = std::uniform_int_distribution<std::int64_t>(0, total + total / 4 + 1)(rng);
        auto r = alloc(p, cap, b);
        EXPECT_EQ(r.allocated, std::min(b, total));
        for (std::size_t l = 0; l < L; ++l) {
            EXPECT_GE(r.budgets[l], 0);
            EXPECT_LE(r.budgets[l], cap[l]);
        }
        EXPECT_EQ(alloc(p, cap, b).budgets, r.budgets);
    }
}

TEST(Alloc, LargerScoreNeverGetsLessUnderEqualCaps) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t L = std::uniform_int_distribution<std::size_t>(2, 10)(rng);
        std::vector<double> p(L);
        for (double& v : p) v = std::uniform_real_distribution<double>(0.01, 1)(rng);
        std::vector<std::int64_t> cap(L, 1'000'000);  // no saturation
        const std::int64_t b = std::uniform_int_distribution<std::int64_t>(0, 100'000)(rng);
        auto r = alloc(p, cap, b);
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t j = 0; j < L; ++j)
                if (p[i] > p[j]) EXPECT_GE(r.budgets[i], r.budgets[j]);
    }
}

TEST(Threshold, HandExample) {
    Tensor dw = Tensor::matrix({{3, -1}, {0.5, -2}});
    EXPECT_EQ(threshold_for_budget(dw, 2), 1.0);
    EXPECT_EQ(threshold_for_budget(dw, 4), 0.0);
    EXPECT_EQ(threshold_for_budget(dw, 0), std::numeric_limits<double>::infinity());
    EXPECT_THROW(threshold_for_budget(dw, 5), std::out_of_range);
    EXPECT_THROW(threshold_for_budget(dw, -1), std::out_of_range);
}

TEST(Sparsify, SoftSignHandExample) {
    Tensor dw = Tensor::matrix({{3, -1}, {0.5, -2}});
    EXPECT_EQ(sparsify(dw, 2, SparsifyMode::SoftSign), Tensor::matrix({{2, 0}, {0, -1}}));
    EXPECT_EQ(sparsify(dw, 2, SparsifyMode::LiteralProduct), Tensor::matrix({{6, 0}, {0, -2}}));
    EXPECT_EQ(sparsify(dw, 2, SparsifyMode::HardMask), Tensor::matrix({{3, 0}, {0, -2}}));
}

TEST(Sparsify, FullBudgetSoftSignIsIdentity) {
    Tensor dw = Tensor::matrix({{3, -1}, {0.5, -2}});
    EXPECT_EQ(sparsify(dw, 4, SparsifyMode::SoftSign), dw);
}

TEST(Sparsify, ZeroBudgetIsZeroInEveryMode) {
    Tensor dw = Tensor::matrix({{3, -1}, {0.5, -2}});
    for (auto mode : {SparsifyMode::SoftSign, SparsifyMode::LiteralProduct, SparsifyMode::HardMask})
        EXPECT_EQ(sparsify(dw, 0, mode), Tensor::zeros({2, 2}));
}

TEST(Sparsify, NonzeroCountEqualsBudget) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t m = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
        // Distinct nonzero magnitudes: a shuffled ladder 1..mn with random signs and jitter.
        Tensor dw({m, n});
        std::vector<double> ladder(m * n);
        std::iota(ladder.begin(), ladder.end(), 1.0);
        std::shuffle(ladder.begin(), ladder.end(), rng);
        for (std::size_t i = 0; i < m * n; ++i)
            dw[i] = (std::bernoulli_distribution(0.5)(rng) ? -1 : 1) *
                    (ladder[i] + std::uniform_real_distribution<double>(0, 0.5)(rng));
        const auto b = std::uniform_int_distribution<std::int64_t>(0, static_cast<std::int64_t>(m * n))(rng);
        for (auto mode : {SparsifyMode::SoftSign, SparsifyMode::LiteralProduct, SparsifyMode::HardMask})
            EXPECT_EQ(count_nonzero(sparsify(dw, b, mode)), static_cast<std::size_t>(b));
    }
}

// The threshold is held fixed during backward, so finite differences (which move it) are
// not the right oracle; compare with the per-entry derivative at fixed tau instead.
TEST(Sparsify, GradientMatchesFixedThresholdDerivative) {
    std::mt19937_64 rng(10);
    for (auto mode : {SparsifyMode::SoftSign, SparsifyMode::LiteralProduct, SparsifyMode::HardMask}) {
        for (int trial = 0; trial < 5; ++trial) {
            Tensor dw = test::random_tensor({4, 5}, rng);
            Tensor weights = test::random_tensor({4, 5}, rng);
            const std::int64_t b = 7;
            const double tau = threshold_for_budget(dw, b);
            std::vector<Tensor> params{dw};
            auto g = ad::record_and_backward(
                [&](ad::Tape& t, std::span<const ad::Var> p) { return ad::sum(t.constant(weights) * sparsify(p[0], b, mode)); },
                params);
            for (std::size_t i = 0; i < dw.size(); ++i) {
                const double x = dw[i];
                double d = 0.0;
                if (std::fabs(x) > tau) d = mode == SparsifyMode::LiteralProduct ? 2 * std::fabs(x) - tau : 1.0;
                EXPECT_NEAR(g[0][i], weights[i] * d, 1e-14) << sparsify_mode_name(mode) << " entry " << i;
            }
        }
    }
}

TEST(Sparsify, FiniteDifferencesAtFullBudget) {
    std::mt19937_64 rng(11);
    for (auto mode : {SparsifyMode::SoftSign, SparsifyMode::LiteralProduct, SparsifyMode::HardMask}) {
        Tensor weights = test::random_tensor({3, 4}, rng);
        std::vector<Tensor> params{test::random_tensor({3, 4}, rng, 0.2, 1.0)};
        auto f = [&](ad::Tape& t, std::span<const ad::Var> p) { return ad::sum(t.constant(weights) * sparsify(p[0], 12, mode)); };
        auto report = ad::finite_diff_check(f, params, 1e-6, 1e-6);
        EXPECT_TRUE(report.passed) << sparsify_mode_name(mode) << " " << report.worst();
    }
}

TEST(Sparsify, OnlySurvivorsReceiveGradient) {
    Tensor dw = Tensor::matrix({{3, -1}, {0.5, -2}});
    std::vector<Tensor> params{dw};
    auto g = ad::record_and_backward([](ad::Tape&, std::span<const ad::Var> p) { return ad::sum(sparsify(p[0], 2)); }, params);
    EXPECT_EQ(g[0], Tensor::matrix({{1, 0}, {0, 1}}));
}
