#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "snella/autodiff/tensor.hpp"

namespace snella::ad {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t size() const { return value().size(); }
    bool requires_grad() const;

    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// A single-use recording of tensor operations. Nodes are appended in evaluation order,
/// so reverse insertion order is a valid topological order for the backward sweep.
///
/// A tape and its nodes belong to one thread.
class Tape {
public:
    /// Receives the gradient flowing into the node and scatters it to the node's inputs.
    using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var parameter(Tensor value) { return push(std::move(value), true, nullptr); }
    Var constant(Tensor value) { return push(std::move(value), false, nullptr); }

    /// Appends an interior node. `backward` is dropped when no input requires a gradient.
    Var push(Tensor value, bool requires_grad, BackwardFn backward);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Seeds d(out)/d(out) = 1 for a scalar output and sweeps backwards.
    void backward(Var out);
    /// Vector-Jacobian product: seeds `seed` (same shape as out) and sweeps backwards.
    void backward(Var out, const Tensor& seed);

    /// Gradient accumulated at `v`; a zero tensor of v's shape when nothing reached it.
    Tensor grad(Var v) const;

    /// Mutable accumulator for node `id`, zero-initialised on first use.
    std::span<double> grad_buffer(std::size_t id);

    std::size_t node_count() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    bool swept_ = false;
};

/// Records `program` over fresh parameter leaves and returns d(output)/d(param) for each
/// parameter in order. The program must produce a single-element output.
using Program = std::function<Var(Tape&, std::span<const Var>)>;

struct ValueAndGrad {
    double value = 0.0;
    std::vector<Tensor> grads;
};

ValueAndGrad value_and_grad(const Program& program, std::span<const Tensor> params);
std::vector<Tensor> record_and_backward(const Program& program, std::span<const Tensor> params);
double evaluate(const Program& program, std::span<const Tensor> params);

}  // namespace snella::ad
