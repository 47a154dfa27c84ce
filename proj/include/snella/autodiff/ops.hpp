#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "snella/autodiff/tape.hpp"

// Differentiable primitives. Binary elementwise ops accept equal shapes or a
// single-element operand on either side (scalar broadcast); nothing else broadcasts.
// Reductions run sequentially in index order.
namespace snella::ad {

using Segment = std::pair<std::size_t, std::size_t>;  // half-open [first, second)

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var neg(Var a);

Var exp(Var a);
Var abs(Var a);        // subgradient 0 at 0
Var square(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);       // max(a, 0); subgradient 0 at 0
Var sign(Var a);       // zero gradient everywhere
Var stop_gradient(Var a);

Var matmul(Var a, Var b);  // (m x k)(k x n)
Var transpose(Var a);      // 2-D only
Var reshape(Var a, Shape shape);

Var sum(Var a);                     // -> rank-0
Var mean(Var a);                    // -> rank-0
Var sum(Var a, std::size_t axis);   // removes `axis`
Var mean(Var a, std::size_t axis);

/// l2 norm of each segment of the last axis: [..., r] -> [..., segments.size()].
/// Subgradient 0 where a segment norm is exactly 0.
Var segment_l2norm(Var a, const std::vector<Segment>& segments);

/// Softmax of a matrix along `axis` (0 normalises each column, 1 each row).
Var softmax(Var a, std::size_t axis);
Var log_softmax(Var a, std::size_t axis);

/// D[i, j, k] = b[i, k] - a[j, k] for b (m x r), a (n x r).
Var pairwise_difference(Var b, Var a);

/// Adds a length-m vector to every row of a (rows x m) matrix.
Var add_row_vector(Var x, Var v);

/// Contiguous slice [begin, end) of a 1-D tensor.
Var slice(Var a, std::size_t begin, std::size_t end);
/// Element i of a 1-D tensor, as a rank-0 tensor.
Var element(Var a, std::size_t i);

/// Evaluates `fn(inputs)` on a scratch tape and records only its output. The
/// intermediates are discarded and rebuilt during the backward sweep, trading a
/// second forward evaluation for not keeping them alive.
Var recompute(std::span<const Var> inputs, const std::function<Var(Tape&, std::span<const Var>)>& fn);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator+(Var a, double c) { return add_scalar(a, c); }
inline Var operator-(Var a) { return neg(a); }

}  // namespace snella::ad
