#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "snella/autodiff/ops.hpp"
#include "snella/kernels/kernel_spec.hpp"

namespace snella {

/// Factor matrices of one adapted m x n weight: A is n x r, B is m x r.
struct LowRankPair {
    ad::Tensor A;
    ad::Tensor B;

    std::size_t rank() const { return A.dim(1); }
    std::size_t rows() const { return B.dim(0); }  // m
    std::size_t cols() const { return A.dim(0); }  // n

    /// Throws std::invalid_argument unless A and B are matrices sharing r <= min(m, n).
    void validate() const;

    /// Gaussian factors with standard deviation `stddev`. For the linear kernel B starts at
    /// zero so that B A^T vanishes and the adapted layer starts at its base weight.
    static LowRankPair initialize(std::size_t m, std::size_t n, std::size_t r, KernelKind kind, std::mt19937_64& rng,
                                  double stddev = 0.02);

    bool operator==(const LowRankPair&) const = default;
};

/// Contiguous pieces of [0, rank): piece p (0-based) is [floor(r p / P), floor(r (p+1) / P)).
std::vector<ad::Segment> segment_bounds(std::size_t rank, std::size_t pieces);

/// Pointwise kernel value kappa(a, b). For the column-normalised kinds (MixK,
/// RBFNormalized) this is the 1 x 1 merge, whose normalised term is exactly 1.
double kernel_eval(const KernelSpec& spec, std::span<const double> a, std::span<const double> b);

/// Recorded kernel merge Delta W (m x n) with Delta W_ij = kappa(A_j, B_i).
///
/// `spec` supplies the kind and piece count; coefficient values come from `coeffs`
/// (laid out as KernelSpec::coefficients()) so they can be trained.
///   MixK:          kappa_p + alpha * softmax_i(kappa_p)_ij + beta   (softmax over the m rows of each column)
///   RBFNormalized: rbf_alpha * softmax_i(-rbf_beta * ||B_i - A_j||^2) + rbf_gamma
ad::Var merge(const KernelSpec& spec, ad::Var A, ad::Var B, ad::Var coeffs);

/// Value-only merge using the coefficients stored in `spec`.
ad::Tensor merge(const KernelSpec& spec, const LowRankPair& pair);

}  // namespace snella
