#pragma once

#include <cstdint>
#include <string_view>

#include "snella/autodiff/ops.hpp"

namespace snella {

enum class SparsifyMode {
    SoftSign,        // sign(w) * max(|w| - tau, 0)
    LiteralProduct,  // w * max(|w| - tau, 0)
    HardMask,        // w * [|w| > tau]
};

std::string_view sparsify_mode_name(SparsifyMode mode);  // "soft", "literal", "hard"
SparsifyMode parse_sparsify_mode(std::string_view name);

/// Magnitude of the (b+1)-th largest |w|, so exactly the entries strictly above it
/// survive when magnitudes are distinct. 0 when b = size, +inf when b = 0.
double threshold_for_budget(const ad::Tensor& dw, std::int64_t budget);

/// Keeps (at most) the `budget` largest-magnitude entries of `dw`. The threshold is
/// detached from the recording; surviving entries keep their gradients.
/// With budget == size, SoftSign and HardMask pass `dw` through unchanged.
ad::Var sparsify(ad::Var dw, std::int64_t budget, SparsifyMode mode = SparsifyMode::SoftSign);
/// The same shrinkage against a fixed threshold `tau` (a constant of the recording).
ad::Var sparsify_at(ad::Var dw, double tau, SparsifyMode mode = SparsifyMode::SoftSign);
ad::Tensor sparsify(const ad::Tensor& dw, std::int64_t budget, SparsifyMode mode = SparsifyMode::SoftSign);

std::size_t count_nonzero(const ad::Tensor& t);

}  // namespace snella
