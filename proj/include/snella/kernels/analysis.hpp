#pragma once

#include <cstddef>
#include <vector>

#include "snella/autodiff/tensor.hpp"
#include "snella/kernels/kernel_spec.hpp"

namespace snella {

/// Singular values of a matrix in descending order.
std::vector<double> singular_values(const ad::Tensor& m);

/// Number of singular values >= eps_rel * sigma_max (0 for the zero matrix).
std::size_t numerical_rank(const ad::Tensor& m, double eps_rel = 1e-9);

/// k x k Gram matrix G_ij = kappa(x_i, x_j) over the rows of `points` (k x r).
ad::Tensor gram_matrix(const KernelSpec& spec, const ad::Tensor& points);

/// Smallest eigenvalue of the Gram matrix over the rows of `points`.
double psd_check(const KernelSpec& spec, const ad::Tensor& points);

}  // namespace snella
