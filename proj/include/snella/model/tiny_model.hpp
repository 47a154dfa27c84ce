#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <variant>
#include <vector>

#include "snella/model/adapted_linear.hpp"

namespace snella {

enum class Activation { Identity, Tanh, Relu };

std::string_view activation_name(Activation act);
Activation parse_activation(std::string_view name);

/// Layer shape chain. With `attention`, the input is read as `seq` tokens of width
/// input_dim / seq and passes through one single-head self-attention block (residual,
/// four d x d projections) before the dense stack.
struct ModelSpec {
    std::size_t input_dim = 16;
    std::vector<std::size_t> hidden{32};
    std::size_t output_dim = 8;
    Activation activation = Activation::Tanh;
    bool bias = true;
    bool attention = false;
    std::size_t seq = 4;

    void validate() const;
    std::size_t layer_count() const;
};

/// Frozen weights of every layer, in model layer order.
struct BaseWeights {
    std::vector<ad::Tensor> W;
    std::vector<std::optional<ad::Tensor>> bias;

    static BaseWeights random(const ModelSpec& spec, std::mt19937_64& rng);
};

struct DenseBlock {
    std::size_t layer;
    Activation activation;
};

struct AttentionBlock {
    std::size_t q, k, v, o;
    std::size_t seq;
};

using Block = std::variant<DenseBlock, AttentionBlock>;

struct ModelVars {
    std::vector<AdapterVars> layers;
};

struct ForwardOptions {
    SparsifyMode mode = SparsifyMode::SoftSign;
    bool recompute = false;
    bool base_only = false;  // skip every adapter
};

class TinyModel {
public:
    TinyModel() = default;
    TinyModel(const ModelSpec& spec, const BaseWeights& base, const KernelSpec& kernel, std::size_t rank,
              std::mt19937_64& rng, double init_std);

    const ModelSpec& spec() const { return spec_; }
    std::vector<AdaptedLinear>& layers() { return layers_; }
    const std::vector<AdaptedLinear>& layers() const { return layers_; }
    const std::vector<Block>& blocks() const { return blocks_; }

    std::vector<std::int64_t> capacities() const;
    std::vector<std::int64_t> budgets() const;
    void set_budgets(const std::vector<std::int64_t>& budgets);

    ModelVars bind(ad::Tape& tape, bool trainable = true) const;
    ad::Var forward(ad::Var x, const ModelVars& vars, const ForwardOptions& options = {}) const;

    ad::Tensor predict(const ad::Tensor& x, SparsifyMode mode = SparsifyMode::SoftSign) const;
    ad::Tensor predict_base(const ad::Tensor& x) const;

private:
    ModelSpec spec_;
    std::vector<AdaptedLinear> layers_;
    std::vector<Block> blocks_;
};

/// FNV-1a over the frozen weights and biases of every layer.
std::uint64_t base_checksum(const TinyModel& model);

}  // namespace snella
