#include "snella/autodiff/tape.hpp"

#include <stdexcept>

namespace snella::ad {

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Tensor value, bool requires_grad, BackwardFn backward) {
    if (swept_) throw std::logic_error("tape already consumed by a backward sweep");
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    if (requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::grad_buffer(std::size_t id) {
    Node& node = nodes_[id];
    if (!node.has_grad) {
        node.grad = Tensor::zeros(node.value.shape());
        node.has_grad = true;
    }
    return node.grad.data();
}

void Tape::backward(Var out) {
    if (out.size() != 1) {
        throw std::invalid_argument("backward() needs a scalar output, got shape " + shape_string(out.shape()));
    }
    backward(out, Tensor::full(out.shape(), 1.0));
}

void Tape::backward(Var out, const Tensor& seed) {
    if (&out.tape() != this) throw std::invalid_argument("output recorded on a different tape");
    if (seed.shape() != out.shape()) {
        throw std::invalid_argument("seed shape " + shape_string(seed.shape()) + " does not match output " +
                                    shape_string(out.shape()));
    }
    if (swept_) throw std::logic_error("tape already consumed by a backward sweep");
    swept_ = true;
    if (!nodes_[out.id()].requires_grad) return;

    auto buf = grad_buffer(out.id());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += seed[i];

    for (std::size_t id = out.id() + 1; id-- > 0;) {
        Node& node = nodes_[id];
        if (!node.has_grad || !node.backward) continue;
        // The closure may append to other nodes' gradients but never to this one.
        const Tensor upstream = node.grad;
        node.backward(*this, upstream);
    }
}

Tensor Tape::grad(Var v) const {
    const Node& node = nodes_[v.id()];
    return node.has_grad ? node.grad : Tensor::zeros(node.value.shape());
}

ValueAndGrad value_and_grad(const Program& program, std::span<const Tensor> params) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.parameter(p));
    Var out = program(tape, leaves);
    if (out.size() != 1) {
        throw std::invalid_argument("program output must be scalar, got shape " + shape_string(out.shape()));
    }
    ValueAndGrad result;
    result.value = out.value()[0];
    tape.backward(out);
    result.grads.reserve(leaves.size());
    for (const auto& leaf : leaves) result.grads.push_back(tape.grad(leaf));
    return result;
}

std::vector<Tensor> record_and_backward(const Program& program, std::span<const Tensor> params) {
    return value_and_grad(program, params).grads;
}

double evaluate(const Program& program, std::span<const Tensor> params) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.constant(p));
    Var out = program(tape, leaves);
    if (out.size() != 1) {
        throw std::invalid_argument("program output must be scalar, got shape " + shape_string(out.shape()));
    }
    return out.value()[0];
}

}  // namespace snella::ad
