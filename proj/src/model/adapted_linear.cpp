#include "snella/model/adapted_linear.hpp"

#include <stdexcept>

namespace snella {

using ad::Tensor;
using ad::Var;

AdaptedLinear AdaptedLinear::create(std::string name, Tensor W0, std::optional<Tensor> bias, const KernelSpec& kernel,
                                    std::size_t rank, std::mt19937_64& rng, double init_std) {
    ad::require_matrix(W0, "AdaptedLinear::W0");
    AdaptedLinear layer;
    layer.name = std::move(name);
    layer.pair = LowRankPair::initialize(W0.dim(0), W0.dim(1), rank, kernel.kind, rng, init_std);
    layer.W0 = std::move(W0);
    layer.bias = std::move(bias);
    layer.spec = kernel;
    if (layer.spec.uses_pieces() && layer.spec.alpha_p.size() != layer.spec.pieces) {
        layer.spec.alpha_p.assign(layer.spec.pieces, 0.0);
    }
    layer.budget = layer.capacity();
    layer.validate();
    return layer;
}

void AdaptedLinear::validate() const {
    ad::require_matrix(W0, "AdaptedLinear::W0");
    pair.validate();
    if (pair.rows() != out_features() || pair.cols() != in_features()) {
        throw std::invalid_argument(name + ": factors " + ad::shape_string(pair.B.shape()) + " / " +
                                    ad::shape_string(pair.A.shape()) + " do not match W0 " +
                                    ad::shape_string(W0.shape()));
    }
    if (bias && (bias->rank() != 1 || bias->dim(0) != out_features())) {
        throw std::invalid_argument(name + ": bias must be a vector of length " + std::to_string(out_features()));
    }
    spec.validate(pair.rank());
    if (budget < 0 || budget > capacity()) {
        throw std::invalid_argument(name + ": budget " + std::to_string(budget) + " outside [0, " +
                                    std::to_string(capacity()) + "]");
    }
}

Tensor AdaptedLinear::delta(SparsifyMode mode) const {
    ad::Tape tape;
    return adapted_delta(*this, bind(tape, *this, false), mode).value();
}

AdapterVars bind(ad::Tape& tape, const AdaptedLinear& layer, bool trainable) {
    auto leaf = [&](const Tensor& t) { return trainable ? tape.parameter(t) : tape.constant(t); };
    return {leaf(layer.pair.A), leaf(layer.pair.B), leaf(layer.spec.coefficients())};
}

Var adapted_delta(const AdaptedLinear& layer, const AdapterVars& vars, SparsifyMode mode, bool recompute) {
    const KernelSpec& spec = layer.spec;
    const std::int64_t budget = layer.budget;
    auto build = [spec, budget, mode](ad::Tape&, std::span<const Var> in) {
        return sparsify(merge(spec, in[0], in[1], in[2]), budget, mode);
    };
    if (!recompute) {
        const Var in[] = {vars.A, vars.B, vars.coeffs};
        return build(vars.A.tape(), in);
    }
    return ad::recompute(std::vector<Var>{vars.A, vars.B, vars.coeffs}, build);
}

namespace {

Var affine(const AdaptedLinear& layer, Var x, Var weight) {
    if (x.value().rank() != 2 || x.shape()[1] != layer.in_features()) {
        throw std::invalid_argument(layer.name + ": input " + ad::shape_string(x.shape()) + " does not match " +
                                    std::to_string(layer.in_features()) + " input features");
    }
    Var y = ad::matmul(x, ad::transpose(weight));
    if (layer.bias) y = ad::add_row_vector(y, x.tape().constant(*layer.bias));
    return y;
}

}  // namespace

Var forward(const AdaptedLinear& layer, Var x, const AdapterVars& vars, SparsifyMode mode, bool recompute) {
    Var w = x.tape().constant(layer.W0) + adapted_delta(layer, vars, mode, recompute);
    return affine(layer, x, w);
}

Var base_forward(const AdaptedLinear& layer, Var x) { return affine(layer, x, x.tape().constant(layer.W0)); }

}  // namespace snella
