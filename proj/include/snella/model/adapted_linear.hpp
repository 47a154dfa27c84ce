#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "snella/allocation/sparsify.hpp"
#include "snella/kernels/merge.hpp"

namespace snella {

/// Frozen base weight W0 (m x n) plus a sparsified kernel merge:
///   y = x (W0 + sparsify(merge(spec, pair), budget))^T + bias
struct AdaptedLinear {
    std::string name;
    ad::Tensor W0;
    std::optional<ad::Tensor> bias;
    LowRankPair pair;
    KernelSpec spec;
    std::int64_t budget = 0;

    /// Adapter starts with a zero update and budget = capacity().
    static AdaptedLinear create(std::string name, ad::Tensor W0, std::optional<ad::Tensor> bias,
                                const KernelSpec& kernel, std::size_t rank, std::mt19937_64& rng, double init_std);

    std::size_t out_features() const { return W0.dim(0); }
    std::size_t in_features() const { return W0.dim(1); }
    std::int64_t capacity() const { return static_cast<std::int64_t>(W0.size()); }

    void validate() const;

    /// Current sparsified update, values only.
    ad::Tensor delta(SparsifyMode mode = SparsifyMode::SoftSign) const;
};

/// Trainable leaves of one adapter on a tape.
struct AdapterVars {
    ad::Var A, B, coeffs;
};

AdapterVars bind(ad::Tape& tape, const AdaptedLinear& layer, bool trainable = true);

/// sparsify(merge(...)) on the tape. With `recompute`, the merge intermediates are not
/// kept; they are rebuilt during backward.
ad::Var adapted_delta(const AdaptedLinear& layer, const AdapterVars& vars, SparsifyMode mode, bool recompute = false);

ad::Var forward(const AdaptedLinear& layer, ad::Var x, const AdapterVars& vars, SparsifyMode mode,
                bool recompute = false);
/// The frozen layer alone: x W0^T + bias.
ad::Var base_forward(const AdaptedLinear& layer, ad::Var x);

}  // namespace snella
