#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "snella/autodiff/gradcheck.hpp"
#include "snella/kernels/analysis.hpp"
#include "snella/kernels/merge.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace snella;
using ad::Tensor;

namespace {

// Direct double-precision MixK: kappa_p + alpha * column softmax + beta.
Tensor mixk_oracle(const KernelSpec& spec, const LowRankPair& pair) {
    const std::size_t m = pair.rows(), n = pair.cols(), r = pair.rank();
    KernelSpec plin = spec;
    plin.kind = KernelKind::PLinear;
    Tensor kp({m, n}), out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            kp.at(i, j) = kernel_eval(plin, pair.A.data().subspan(j * r, r), pair.B.data().subspan(i * r, r));
    for (std::size_t j = 0; j < n; ++j) {
        double denom = 0.0;
        for (std::size_t i = 0; i < m; ++i) denom += std::exp(kp.at(i, j));
        for (std::size_t i = 0; i < m; ++i)
            out.at(i, j) = kp.at(i, j) + spec.alpha * std::exp(kp.at(i, j)) / denom + spec.beta;
    }
    return out;
}

LowRankPair random_pair(std::size_t m, std::size_t n, std::size_t r, std::mt19937_64& rng, double lo = -1, double hi = 1) {
    return {test::random_tensor({n, r}, rng, lo, hi), test::random_tensor({m, r}, rng, lo, hi)};
}

KernelSpec random_spec(KernelKind kind, std::mt19937_64& rng) {
    KernelSpec spec = KernelSpec::make(kind, 2);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    for (double& a : spec.alpha_p) a = u(rng);
    spec.alpha = u(rng);
    spec.beta = u(rng) - 1.0;
    spec.sig_alpha = u(rng);
    spec.sig_beta = u(rng);
    spec.sig_gamma = u(rng) - 1.0;
    spec.rbf_alpha = u(rng);
    spec.rbf_beta = u(rng);
    spec.rbf_gamma = u(rng) - 1.0;
    return spec;
}

}  // namespace

TEST(SegmentBounds, FloorPartition) {
    EXPECT_EQ(segment_bounds(4, 2), (std::vector<ad::Segment>{{0, 2}, {2, 4}}));
    EXPECT_EQ(segment_bounds(5, 2), (std::vector<ad::Segment>{{0, 2}, {2, 5}}));
    EXPECT_EQ(segment_bounds(3, 1), (std::vector<ad::Segment>{{0, 3}}));
    EXPECT_THROW(segment_bounds(3, 4), std::invalid_argument);
    EXPECT_THROW(segment_bounds(3, 0), std::invalid_argument);
}

TEST(SegmentBounds, CoverRankContiguously) {
    for (std::size_t r = 1; r <= 12; ++r)
        for (std::size_t P = 1; P <= r; ++P) {
            auto b = segment_bounds(r, P);
            ASSERT_EQ(b.size(), P);
            EXPECT_EQ(b.front().first, 0u);
            EXPECT_EQ(b.back().second, r);
            for (std::size_t p = 0; p < P; ++p) {
                EXPECT_LT(b[p].first, b[p].second);
                if (p) EXPECT_EQ(b[p].first, b[p - 1].second);
            }
        }
}

TEST(KernelEval, PiecewiseLinearVanishesOnEqualInputs) {
    KernelSpec spec = KernelSpec::make(KernelKind::PLinear, 2);
    spec.alpha_p = {3.0, -7.0};
    std::vector<double> a{0.3, -1.2, 4.0, 2.0};
    EXPECT_EQ(kernel_eval(spec, a, a), 0.0);
}

TEST(KernelEval, SigmoidAtZeroInnerProduct) {
    KernelSpec spec = KernelSpec::make(KernelKind::Sigmoid);
    spec.sig_alpha = 2.0;
    spec.sig_beta = 5.0;
    spec.sig_gamma = 0.25;
    std::vector<double> a{1.0, 0.0}, b{0.0, 3.0};
    EXPECT_DOUBLE_EQ(kernel_eval(spec, a, b), 2.0 * 0.5 + 0.25);
}

TEST(KernelEval, PiecewiseLinearHandValue) {
    KernelSpec spec = KernelSpec::make(KernelKind::PLinear, 2);
    spec.alpha_p = {1.0, 1.0};
    std::vector<double> a{1, 2, 3, 4}, b{0, 0, 0, 0};
    EXPECT_DOUBLE_EQ(kernel_eval(spec, a, b), std::sqrt(5.0) + 5.0);
}

TEST(KernelEval, LengthMismatchThrows) {
    std::vector<double> a{1, 2}, b{1, 2, 3};
    EXPECT_THROW(kernel_eval(KernelSpec::make(KernelKind::Linear), a, b), std::invalid_argument);
}

TEST(KernelEval, SymmetricForPlainKernels) {
    std::mt19937_64 rng(1);
    for (KernelKind kind : {KernelKind::Linear, KernelKind::PLinear, KernelKind::RBF}) {
        KernelSpec spec = random_spec(kind, rng);
        for (int t = 0; t < 20; ++t) {
            Tensor a = test::random_tensor({5}, rng), b = test::random_tensor({5}, rng);
            EXPECT_DOUBLE_EQ(kernel_eval(spec, a.data(), b.data()), kernel_eval(spec, b.data(), a.data()));
        }
    }
}

TEST(Merge, LinearIsOuterProduct) {
    LowRankPair pair{Tensor::matrix({{1}, {2}}), Tensor::matrix({{3}, {4}})};
    EXPECT_EQ(merge(KernelSpec::make(KernelKind::Linear), pair), Tensor::matrix({{3, 6}, {4, 8}}));
}

TEST(Merge, MixKWithZeroCoefficientsIsZero) {
    std::mt19937_64 rng(2);
    auto pair = random_pair(6, 5, 4, rng);
    EXPECT_EQ(merge(KernelSpec::make(KernelKind::MixK), pair), Tensor::zeros({6, 5}));
}

TEST(Merge, ZeroInitialisationVanishesForScaledKinds) {
    std::mt19937_64 rng(3);
    for (KernelKind kind : {KernelKind::PLinear, KernelKind::Sigmoid, KernelKind::RBF, KernelKind::MixK}) {
        auto pair = random_pair(4, 3, 2, rng);
        EXPECT_EQ(merge(KernelSpec::make(kind), pair), Tensor::zeros({4, 3})) << kernel_name(kind);
    }
    auto linear = LowRankPair::initialize(4, 3, 2, KernelKind::Linear, rng);
    EXPECT_EQ(merge(KernelSpec::make(KernelKind::Linear), linear), Tensor::zeros({4, 3}));
}

TEST(Merge, PlainKindsMatchPointwiseKernel) {
    std::mt19937_64 rng(4);
    for (KernelKind kind : {KernelKind::Linear, KernelKind::PLinear, KernelKind::Sigmoid, KernelKind::RBF}) {
        KernelSpec spec = random_spec(kind, rng);
        auto pair = random_pair(5, 7, 3, rng);
        Tensor dw = merge(spec, pair);
        ASSERT_EQ(dw.shape(), (ad::Shape{5, 7}));
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 7; ++j)
                EXPECT_NEAR(dw.at(i, j), kernel_eval(spec, pair.A.data().subspan(j * 3, 3), pair.B.data().subspan(i * 3, 3)),
                            1e-13)
                    << kernel_name(kind);
    }
}

TEST(Merge, MixKMatchesDirectFormula) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 5; ++t) {
        KernelSpec spec = random_spec(KernelKind::MixK, rng);
        auto pair = random_pair(6, 4, 4, rng);
        Tensor got = merge(spec, pair), want = mixk_oracle(spec, pair);
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-13);
    }
}

TEST(Merge, MixKColumnComponentSumsToAlpha) {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 10; ++t) {
        KernelSpec spec = random_spec(KernelKind::MixK, rng);
        spec.alpha = std::uniform_real_distribution<double>(-3, 3)(rng);
        auto pair = random_pair(9, 7, 4, rng, -2, 2);
        Tensor dw = merge(spec, pair);
        KernelSpec plin = spec;
        plin.kind = KernelKind::PLinear;
        Tensor kp = merge(plin, pair);
        for (std::size_t j = 0; j < 7; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < 9; ++i) s += dw.at(i, j) - kp.at(i, j) - spec.beta;
            EXPECT_NEAR(s, spec.alpha, 1e-9);
        }
    }
}

TEST(Merge, RbfNormalizedColumnsSumToAlphaPlusOffsets) {
    std::mt19937_64 rng(7);
    KernelSpec spec = random_spec(KernelKind::RBFNormalized, rng);
    auto pair = random_pair(5, 6, 3, rng);
    Tensor dw = merge(spec, pair);
    for (std::size_t j = 0; j < 6; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < 5; ++i) s += dw.at(i, j);
        EXPECT_NEAR(s, spec.rbf_alpha + 5 * spec.rbf_gamma, 1e-12);
    }
}

TEST(Merge, InvalidInputs) {
    LowRankPair bad{Tensor({3, 2}), Tensor({4, 3})};
    EXPECT_THROW(merge(KernelSpec::make(KernelKind::Linear), bad), std::invalid_argument);
    std::mt19937_64 rng(8);
    auto pair = random_pair(4, 4, 2, rng);
    EXPECT_THROW(merge(KernelSpec::make(KernelKind::MixK, 3), pair), std::invalid_argument);
    KernelSpec rbf = KernelSpec::make(KernelKind::RBF);
    rbf.rbf_beta = 0.0;
    EXPECT_THROW(merge(rbf, pair), std::invalid_argument);
}

TEST(Merge, AllKindsPassFiniteDifferenceChecks) {
    std::mt19937_64 rng(9);
    for (KernelKind kind : all_kernels()) {
        for (int t = 0; t < 3; ++t) {
            KernelSpec spec = random_spec(kind, rng);
            auto pair = random_pair(5, 4, 3, rng);
            Tensor weights = test::random_tensor({5, 4}, rng);
            std::vector<Tensor> params{pair.A, pair.B, spec.coefficients()};
            ad::Program f = [&](ad::Tape& tape, std::span<const ad::Var> p) {
                return ad::sum(tape.constant(weights) * merge(spec, p[0], p[1], p[2]));
            };
            auto report = ad::finite_diff_check(f, params, 1e-5, 1e-5);
            EXPECT_TRUE(report.passed) << kernel_name(kind) << " worst " << report.worst();
        }
    }
}

TEST(Merge, InitialCoefficientsReceiveGradient) {
    std::mt19937_64 rng(10);
    KernelSpec spec = KernelSpec::make(KernelKind::MixK);
    auto pair = LowRankPair::initialize(6, 5, 4, KernelKind::MixK, rng);
    Tensor target = test::random_tensor({6, 5}, rng);
    std::vector<Tensor> params{pair.A, pair.B, spec.coefficients()};
    auto g = ad::record_and_backward(
        [&](ad::Tape& tape, std::span<const ad::Var> p) {
            return ad::mean(ad::square(merge(spec, p[0], p[1], p[2]) - tape.constant(target)));
        },
        params);
    double coeff_norm = 0.0;
    for (double v : g[2].data()) coeff_norm += std::abs(v);
    EXPECT_GT(coeff_norm, 0.0);
}

TEST(NumericalRank, Basics) {
    Tensor eye({4, 4});
    for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
    EXPECT_EQ(numerical_rank(eye, 1e-6), 4u);
    EXPECT_EQ(numerical_rank(Tensor({3, 5}), 1e-6), 0u);
    LowRankPair outer{Tensor::matrix({{1}, {-2}, {3}}), Tensor::matrix({{2}, {0.5}})};
    EXPECT_EQ(numerical_rank(merge(KernelSpec::make(KernelKind::Linear), outer), 1e-9), 1u);
    Tensor bad = eye;
    bad.at(0, 0) = std::nan("");
    EXPECT_THROW(numerical_rank(bad, 1e-6), std::invalid_argument);
}

TEST(NumericalRank, LowRankProductAgreesWithElimination) {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 5; ++t) {
        LowRankPair pair{test::gaussian_tensor({16, 3}, rng), test::gaussian_tensor({16, 3}, rng)};
        Tensor prod = merge(KernelSpec::make(KernelKind::Linear), pair);
        EXPECT_EQ(test::elimination_rank(prod, 1e-10), 3u);
        EXPECT_EQ(numerical_rank(prod, 1e-9), 3u);
    }
}

TEST(NumericalRank, LinearMergeNeverExceedsRank) {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 10; ++t) {
        LowRankPair pair{test::gaussian_tensor({20, 4}, rng), test::gaussian_tensor({24, 4}, rng)};
        EXPECT_LE(numerical_rank(merge(KernelSpec::make(KernelKind::Linear), pair), 1e-9), 4u);
    }
}

TEST(NumericalRank, NonlinearMergesExceedRank) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed);
        LowRankPair pair{test::gaussian_tensor({64, 4}, rng), test::gaussian_tensor({64, 4}, rng)};
        for (KernelKind kind : {KernelKind::PLinear, KernelKind::MixK}) {
            Tensor dw = merge(KernelSpec::canonical(kind), pair);
            const std::size_t rank = numerical_rank(dw, 1e-9);
            EXPECT_GT(rank, 4u) << kernel_name(kind) << " seed " << seed;
            EXPECT_EQ(rank, test::elimination_rank(dw, 1e-9)) << kernel_name(kind) << " seed " << seed;
        }
    }
}

TEST(PsdCheck, LinearGramIsPsd) {
    std::mt19937_64 rng(13);
    Tensor pts = test::gaussian_tensor({10, 3}, rng);
    EXPECT_GE(psd_check(KernelSpec::canonical(KernelKind::Linear), pts), -1e-8);
}

TEST(PsdCheck, RbfGramIsPsd) {
    std::mt19937_64 rng(14);
    for (int t = 0; t < 10; ++t) {
        Tensor pts = test::gaussian_tensor({8, 4}, rng);
        KernelSpec spec = KernelSpec::canonical(KernelKind::RBF);
        EXPECT_GE(psd_check(spec, pts), -1e-8);
    }
}

TEST(PsdCheck, SinglePoint) {
    Tensor pt = Tensor::matrix({{0.5, -1.5, 2.0}});
    EXPECT_GE(psd_check(KernelSpec::canonical(KernelKind::RBF), pt), 0.0);
    EXPECT_DOUBLE_EQ(psd_check(KernelSpec::canonical(KernelKind::Linear), pt), 0.25 + 2.25 + 4.0);
}

TEST(GradientStability, UnnormalisedRbfVanishesAtLargeScale) {
    std::mt19937_64 rng(15);
    const double c = 10.0;
    auto mean_grad = [&](KernelKind kind, const LowRankPair& pair) {
        KernelSpec spec = KernelSpec::canonical(kind);
        std::vector<Tensor> params{pair.A, pair.B, spec.coefficients()};
        auto g = ad::record_and_backward(
            [&](ad::Tape&, std::span<const ad::Var> p) { return ad::sum(merge(spec, p[0], p[1], p[2])); }, params);
        double total = 0.0;
        for (std::size_t k = 0; k < 2; ++k)
            for (double v : g[k].data()) total += std::abs(v);
        return total / static_cast<double>(g[0].size() + g[1].size());
    };
    auto pair = random_pair(16, 16, 4, rng, -c, c);
    EXPECT_LE(mean_grad(KernelKind::RBF, pair), 0.1 * mean_grad(KernelKind::MixK, pair));
}
