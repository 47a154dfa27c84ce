#include "snella/model/tiny_model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "snella/util/fnv.hpp"

namespace snella {

using ad::Tensor;
using ad::Var;

std::string_view activation_name(Activation act) {
    switch (act) {
        case Activation::Identity: return "identity";
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
    }
    return "?";
}

Activation parse_activation(std::string_view name) {
    for (auto a : {Activation::Identity, Activation::Tanh, Activation::Relu})
        if (activation_name(a) == name) return a;
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

void ModelSpec::validate() const {
    if (input_dim == 0 || output_dim == 0) throw std::invalid_argument("model dims must be positive");
    for (auto h : hidden)
        if (h == 0) throw std::invalid_argument("hidden widths must be positive");
    if (attention) {
        if (seq == 0 || input_dim % seq != 0) {
            throw std::invalid_argument("attention needs input_dim divisible by seq");
        }
    }
}

std::size_t ModelSpec::layer_count() const { return (attention ? 4 : 0) + hidden.size() + 1; }

namespace {

// Layer shapes (m, n) in model order.
std::vector<std::pair<std::size_t, std::size_t>> layer_shapes(const ModelSpec& spec) {
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    if (spec.attention) {
        const std::size_t d = spec.input_dim / spec.seq;
        for (int i = 0; i < 4; ++i) shapes.emplace_back(d, d);
    }
    std::size_t in = spec.input_dim;
    for (auto h : spec.hidden) {
        shapes.emplace_back(h, in);
        in = h;
    }
    shapes.emplace_back(spec.output_dim, in);
    return shapes;
}

Var activate(Var x, Activation act) {
    switch (act) {
        case Activation::Identity: return x;
        case Activation::Tanh: return ad::tanh(x);
        case Activation::Relu: return ad::relu(x);
    }
    throw std::logic_error("unreachable activation");
}

}  // namespace

BaseWeights BaseWeights::random(const ModelSpec& spec, std::mt19937_64& rng) {
    spec.validate();
    BaseWeights base;
    for (auto [m, n] : layer_shapes(spec)) {
        std::normal_distribution<double> w(0.0, 1.0 / std::sqrt(static_cast<double>(n)));
        Tensor W({m, n});
        for (double& v : W.data()) v = w(rng);
        base.W.push_back(std::move(W));
        if (spec.bias) {
            std::normal_distribution<double> b(0.0, 0.1);
            Tensor bias({m});
            for (double& v : bias.data()) v = b(rng);
            base.bias.emplace_back(std::move(bias));
        } else {
            base.bias.emplace_back(std::nullopt);
        }
    }
    return base;
}

TinyModel::TinyModel(const ModelSpec& spec, const BaseWeights& base, const KernelSpec& kernel, std::size_t rank,
                     std::mt19937_64& rng, double init_std)
    : spec_(spec) {
    spec.validate();
    const auto shapes = layer_shapes(spec);
    if (base.W.size() != shapes.size() || base.bias.size() != shapes.size()) {
        throw std::invalid_argument("base weights hold " + std::to_string(base.W.size()) + " layers, model needs " +
                                    std::to_string(shapes.size()));
    }
    std::vector<std::string> names;
    if (spec.attention) names = {"attn.q", "attn.k", "attn.v", "attn.o"};
    for (std::size_t i = 0; i < spec.hidden.size(); ++i) names.push_back("dense" + std::to_string(i));
    names.push_back("head");

    for (std::size_t l = 0; l < shapes.size(); ++l) {
        if (base.W[l].shape() != ad::Shape{shapes[l].first, shapes[l].second}) {
            throw std::invalid_argument("base weight " + std::to_string(l) + " has shape " +
                                        ad::shape_string(base.W[l].shape()));
        }
        const std::size_t r = std::min({rank, shapes[l].first, shapes[l].second});
        KernelSpec k = kernel;
        if (k.uses_pieces()) k.pieces = std::min(k.pieces, r);
        layers_.push_back(AdaptedLinear::create(names[l], base.W[l], base.bias[l], k, r, rng, init_std));
    }

    std::size_t next = 0;
    if (spec.attention) {
        blocks_.push_back(AttentionBlock{0, 1, 2, 3, spec.seq});
        next = 4;
    }
    for (std::size_t i = 0; i < spec.hidden.size(); ++i) blocks_.push_back(DenseBlock{next++, spec.activation});
    blocks_.push_back(DenseBlock{next, Activation::Identity});
}

std::vector<std::int64_t> TinyModel::capacities() const {
    std::vector<std::int64_t> out;
    for (const auto& l : layers_) out.push_back(l.capacity());
    return out;
}

std::vector<std::int64_t> TinyModel::budgets() const {
    std::vector<std::int64_t> out;
    for (const auto& l : layers_) out.push_back(l.budget);
    return out;
}

void TinyModel::set_budgets(const std::vector<std::int64_t>& budgets) {
    if (budgets.size() != layers_.size()) throw std::invalid_argument("budget count does not match layer count");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (budgets[l] < 0 || budgets[l] > layers_[l].capacity()) {
            throw std::invalid_argument(layers_[l].name + ": budget out of range");
        }
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) layers_[l].budget = budgets[l];
}

ModelVars TinyModel::bind(ad::Tape& tape, bool trainable) const {
    ModelVars vars;
    for (const auto& l : layers_) vars.layers.push_back(snella::bind(tape, l, trainable));
    return vars;
}

Var TinyModel::forward(Var x, const ModelVars& vars, const ForwardOptions& options) const {
    if (x.value().rank() != 2 || x.shape()[1] != spec_.input_dim) {
        throw std::invalid_argument("model input must be batch x " + std::to_string(spec_.input_dim) + ", got " +
                                    ad::shape_string(x.shape()));
    }
    auto apply = [&](std::size_t l, Var h) {
        if (options.base_only) return base_forward(layers_[l], h);
        return snella::forward(layers_[l], h, vars.layers.at(l), options.mode, options.recompute);
    };

    ad::Tape& tape = x.tape();
    for (const Block& block : blocks_) {
        if (const auto* dense = std::get_if<DenseBlock>(&block)) {
            x = activate(apply(dense->layer, x), dense->activation);
            continue;
        }
        const auto& att = std::get<AttentionBlock>(block);
        const std::size_t batch = x.shape()[0], d = spec_.input_dim / att.seq, tokens = batch * att.seq;
        Var h = ad::reshape(x, {tokens, d});
        Var q = apply(att.q, h), k = apply(att.k, h), v = apply(att.v, h);
        // Tokens attend only within their own example.
        Tensor mask({tokens, tokens});
        for (std::size_t i = 0; i < tokens; ++i)
            for (std::size_t j = 0; j < tokens; ++j)
                mask.at(i, j) = i / att.seq == j / att.seq ? 0.0 : -std::numeric_limits<double>::infinity();
        Var scores = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
        Var weights = ad::softmax(scores + tape.constant(std::move(mask)), 1);
        Var out = apply(att.o, ad::matmul(weights, v));
        x = ad::reshape(h + out, {batch, spec_.input_dim});
    }
    return x;
}

Tensor TinyModel::predict(const Tensor& x, SparsifyMode mode) const {
    ad::Tape tape;
    return forward(tape.constant(x), bind(tape, false), {.mode = mode}).value();
}

Tensor TinyModel::predict_base(const Tensor& x) const {
    ad::Tape tape;
    return forward(tape.constant(x), {}, {.base_only = true}).value();
}

std::uint64_t base_checksum(const TinyModel& model) {
    std::uint64_t h = fnv_offset;
    for (const auto& l : model.layers()) {
        h = fnv1a(l.W0.data(), h);
        if (l.bias) h = fnv1a(l.bias->data(), h);
    }
    return h;
}

}  // namespace snella
