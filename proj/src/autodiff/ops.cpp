#include "snella/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace snella::ad {
namespace {

void same_tape(Var a, Var b, const char* op) {
    if (&a.tape() != &b.tape()) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                                shape_string(b));
}

// Elementwise op with derivative expressed through input x and output y.
template <class Fwd, class Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
    Tape& tape = a.tape();
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
    const std::size_t self = tape.node_count();
    const std::size_t ia = a.id();
    return tape.push(std::move(y), a.requires_grad(), [ia, self, deriv](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(ia);
        const Tensor& yv = t.value(self);
        auto ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(xv[i], yv[i]);
    });
}

enum class Bcast { None, LeftScalar, RightScalar };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Bcast::None;
    if (a.size() == 1) return Bcast::LeftScalar;
    if (b.size() == 1) return Bcast::RightScalar;
    shape_error(op, a.shape(), b.shape());
}

// Accumulates `contribution(i)` into the gradient of `id`, summing when that operand was broadcast.
template <class F>
void scatter(Tape& t, std::size_t id, bool broadcast, std::size_t n, F contribution) {
    auto buf = t.grad_buffer(id);
    if (broadcast) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += contribution(i);
        buf[0] += acc;
    } else {
        for (std::size_t i = 0; i < n; ++i) buf[i] += contribution(i);
    }
}

template <class Op, class DA, class DB>
Var binary(Var a, Var b, const char* name, Op op, DA da, DB db) {
    same_tape(a, b, name);
    Tape& tape = a.tape();
    const Tensor& x = a.value();
    const Tensor& z = b.value();
    const Bcast kind = broadcast_kind(x, z, name);
    const Shape out_shape = kind == Bcast::LeftScalar ? z.shape() : x.shape();
    Tensor y(out_shape);
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double xi = kind == Bcast::LeftScalar ? x[0] : x[i];
        const double zi = kind == Bcast::RightScalar ? z[0] : z[i];
        y[i] = op(xi, zi);
    }
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    const bool ra = a.requires_grad();
    const bool rb = b.requires_grad();
    return tape.push(std::move(y), ra || rb, [=](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(ia);
        const Tensor& zv = t.value(ib);
        auto xa = [&](std::size_t i) { return kind == Bcast::LeftScalar ? xv[0] : xv[i]; };
        auto zb = [&](std::size_t i) { return kind == Bcast::RightScalar ? zv[0] : zv[i]; };
        if (ra) scatter(t, ia, kind == Bcast::LeftScalar, g.size(), [&](std::size_t i) { return g[i] * da(xa(i), zb(i)); });
        if (rb) scatter(t, ib, kind == Bcast::RightScalar, g.size(), [&](std::size_t i) { return g[i] * db(xa(i), zb(i)); });
    });
}

// Splits a shape around `axis` into (outer, extent, inner) strides.
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
    if (axis >= shape.size()) {
        throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                                    shape_string(shape));
    }
    AxisSplit s;
    for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
    s.extent = shape[axis];
    for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
    return s;
}

void require_rank(Var a, std::size_t rank, const char* op) {
    if (a.value().rank() != rank) {
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                    shape_string(a.shape()));
    }
}

}  // namespace

Var add(Var a, Var b) {
    return binary(
        a, b, "add", [](double x, double z) { return x + z; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
    return binary(
        a, b, "sub", [](double x, double z) { return x - z; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
    return binary(
        a, b, "mul", [](double x, double z) { return x * z; }, [](double, double z) { return z; },
        [](double x, double) { return x; });
}

Var scale(Var a, double c) {
    return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
    return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var exp(Var a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var abs(Var a) {
    return unary(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var square(Var a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var tanh(Var a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sign(Var a) {
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
    return a.tape().constant(std::move(y));
}

Var stop_gradient(Var a) { return a.tape().constant(a.value()); }

Var matmul(Var a, Var b) {
    same_tape(a, b, "matmul");
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const Tensor& x = a.value();
    const Tensor& z = b.value();
    const std::size_t m = x.dim(0), k = x.dim(1), n = z.dim(1);
    if (z.dim(0) != k) shape_error("matmul", x.shape(), z.shape());
    Tensor y({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double xip = x[i * k + p];
            for (std::size_t j = 0; j < n; ++j) y[i * n + j] += xip * z[p * n + j];
        }
    }
    const std::size_t ia = a.id(), ib = b.id();
    const bool ra = a.requires_grad(), rb = b.requires_grad();
    return a.tape().push(std::move(y), ra || rb, [=](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(ia);
        const Tensor& zv = t.value(ib);
        if (ra) {
            auto ga = t.grad_buffer(ia);  // G B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * zv[p * n + j];
                    ga[i * k + p] += acc;
                }
        }
        if (rb) {
            auto gb = t.grad_buffer(ib);  // A^T G
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double xip = xv[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += xip * g[i * n + j];
                }
        }
    });
}

Var transpose(Var a) {
    require_rank(a, 2, "transpose");
    const Tensor& x = a.value();
    const std::size_t m = x.dim(0), n = x.dim(1);
    Tensor y({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) y[j * m + i] = x[i * n + j];
    const std::size_t ia = a.id();
    return a.tape().push(std::move(y), a.requires_grad(), [=](Tape& t, const Tensor& g) {
        auto ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
}

Var reshape(Var a, Shape shape) {
    if (element_count(shape) != a.size()) shape_error("reshape", a.shape(), shape);
    const std::size_t ia = a.id();
    return a.tape().push(a.value().reshaped(std::move(shape)), a.requires_grad(), [ia](Tape& t, const Tensor& g) {
        auto ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var sum(Var a) {
    const Tensor& x = a.value();
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    const std::size_t ia = a.id();
    return a.tape().push(Tensor::scalar(acc), a.requires_grad(), [ia](Tape& t, const Tensor& g) {
        auto ga = t.grad_buffer(ia);
        for (double& v : ga) v += g[0];
    });
}

Var mean(Var a) {
    if (a.size() == 0) throw std::invalid_argument("mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var sum(Var a, std::size_t axis) {
    const Tensor& x = a.value();
    const AxisSplit s = split_axis(x.shape(), axis, "sum");
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    Tensor y(out_shape);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t e = 0; e < s.extent; ++e)
            for (std::size_t in = 0; in < s.inner; ++in) y[o * s.inner + in] += x[(o * s.extent + e) * s.inner + in];
    const std::size_t ia = a.id();
    return a.tape().push(std::move(y), a.requires_grad(), [ia, s](Tape& t, const Tensor& g) {
        auto ga = t.grad_buffer(ia);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t e = 0; e < s.extent; ++e)
                for (std::size_t in = 0; in < s.inner; ++in) ga[(o * s.extent + e) * s.inner + in] += g[o * s.inner + in];
    });
}

Var mean(Var a, std::size_t axis) {
    const std::size_t extent = split_axis(a.shape(), axis, "mean").extent;
    if (extent == 0) throw std::invalid_argument("mean over an empty axis");
    return scale(sum(a, axis), 1.0 / static_cast<double>(extent));
}

Var segment_l2norm(Var a, const std::vector<Segment>& segments) {
    const Tensor& x = a.value();
    if (x.rank() == 0) throw std::invalid_argument("segment_l2norm: rank-0 input");
    const std::size_t r = x.shape().back();
    for (const auto& [lo, hi] : segments) {
        if (lo >= hi || hi > r) throw std::invalid_argument("segment_l2norm: segment out of range for last axis");
    }
    const std::size_t rows = x.size() / std::max<std::size_t>(r, 1);
    const std::size_t P = segments.size();
    Shape out_shape = x.shape();
    out_shape.back() = P;
    Tensor y(out_shape);
    for (std::size_t row = 0; row < rows; ++row) {
        for (std::size_t p = 0; p < P; ++p) {
            double acc = 0.0;
            for (std::size_t k = segments[p].first; k < segments[p].second; ++k) {
                const double v = x[row * r + k];
                acc += v * v;
            }
            y[row * P + p] = std::sqrt(acc);
        }
    }
    const std::size_t ia = a.id();
    const std::size_t self = a.tape().node_count();
    return a.tape().push(std::move(y), a.requires_grad(), [=](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(ia);
        const Tensor& yv = t.value(self);
        auto ga = t.grad_buffer(ia);
        for (std::size_t row = 0; row < rows; ++row) {
            for (std::size_t p = 0; p < P; ++p) {
                const double norm = yv[row * P + p];
                if (norm == 0.0) continue;
                const double coef = g[row * P + p] / norm;
                for (std::size_t k = segments[p].first; k < segments[p].second; ++k) ga[row * r + k] += coef * xv[row * r + k];
            }
        }
    });
}

namespace {

// Iterates the lines of a matrix along `axis`: calls f(base, stride, length) per line.
template <class F>
void for_each_line(std::size_t m, std::size_t n, std::size_t axis, F f) {
    if (axis == 0) {
        for (std::size_t j = 0; j < n; ++j) f(j, n, m);
    } else {
        for (std::size_t i = 0; i < m; ++i) f(i * n, std::size_t{1}, n);
    }
}

void check_softmax_args(Var a, std::size_t axis, const char* op) {
    require_rank(a, 2, op);
    if (axis > 1) throw std::invalid_argument(std::string(op) + ": axis must be 0 or 1");
    if (a.value().dim(axis) == 0) throw std::invalid_argument(std::string(op) + ": empty axis");
}

}  // namespace

Var softmax(Var a, std::size_t axis) {
    check_softmax_args(a, axis, "softmax");
    const Tensor& x = a.value();
    const std::size_t m = x.dim(0), n = x.dim(1);
    Tensor y(x.shape());
    for_each_line(m, n, axis, [&](std::size_t base, std::size_t stride, std::size_t len) {
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < len; ++k) hi = std::max(hi, x[base + k * stride]);
        double total = 0.0;
        for (std::size_t k = 0; k < len; ++k) {
            const double e = std::exp(x[base + k * stride] - hi);
            y[base + k * stride] = e;
            total += e;
        }
        for (std::size_t k = 0; k < len; ++k) y[base + k * stride] /= total;
    });
    const std::size_t ia = a.id();
    const std::size_t self = a.tape().node_count();
    return a.tape().push(std::move(y), a.requires_grad(), [=](Tape& t, const Tensor& g) {
        const Tensor& yv = t.value(self);
        auto ga = t.grad_buffer(ia);
        for_each_line(m, n, axis, [&](std::size_t base, std::size_t stride, std::size_t len) {
            double dot = 0.0;
            for (std::size_t k = 0; k < len; ++k) dot += g[base + k * stride] * yv[base + k * stride];
            for (std::size_t k = 0; k < len; ++k) {
                const std::size_t idx = base + k * stride;
                ga[idx] += yv[idx] * (g[idx] - dot);
            }
        });
    });
}

Var log_softmax(Var a, std::size_t axis) {
    check_softmax_args(a, axis, "log_softmax");
    const Tensor& x = a.value();
    const std::size_t m = x.dim(0), n = x.dim(1);
    Tensor y(x.shape());
    for_each_line(m, n, axis, [&](std::size_t base, std::size_t stride, std::size_t len) {
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < len; ++k) hi = std::max(hi, x[base + k * stride]);
        double total = 0.0;
        for (std::size_t k = 0; k < len; ++k) total += std::exp(x[base + k * stride] - hi);
        const double lse = hi + std::log(total);
        for (std::size_t k = 0; k < len; ++k) y[base + k * stride] = x[base + k * stride] - lse;
    });
    const std::size_t ia = a.id();
    const std::size_t self = a.tape().node_count();
    return a.tape().push(std::move(y), a.requires_grad(), [=](Tape& t, const Tensor& g) {
        const Tensor& yv = t.value(self);
        auto ga = t.grad_buffer(ia);
        for_each_line(m, n, axis, [&](std::size_t base, std::size_t stride, std::size_t len) {
            double gsum = 0.0;
            for (std::size_t k = 0; k < len; ++k) gsum += g[base + k * stride];
            for (std::size_t k = 0; k < len; ++k) {
                const std::size_t idx = base + k * stride;
                ga[idx] += g[idx] - std::exp(yv[idx]) * gsum;
            }
        });
    });
}

Var pairwise_difference(Var b, Var a) {
    same_tape(a, b, "pairwise_difference");
    require_rank(a, 2, "pairwise_difference");
    require_rank(b, 2, "pairwise_difference");
    const Tensor& bv = b.value();
    const Tensor& av = a.value();
    const std::size_t m = bv.dim(0), n = av.dim(0), r = bv.dim(1);
    if (av.dim(1) != r) shape_error("pairwise_difference", bv.shape(), av.shape());
    Tensor y({m, n, r});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < r; ++k) y[(i * n + j) * r + k] = bv[i * r + k] - av[j * r + k];
    const std::size_t ib = b.id(), ia = a.id();
    const bool rb = b.requires_grad(), ra = a.requires_grad();
    return b.tape().push(std::move(y), ra || rb, [=](Tape& t, const Tensor& g) {
        if (rb) {
            auto gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    for (std::size_t k = 0; k < r; ++k) gb[i * r + k] += g[(i * n + j) * r + k];
        }
        if (ra) {
            auto ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    for (std::size_t k = 0; k < r; ++k) ga[j * r + k] -= g[(i * n + j) * r + k];
        }
    });
}

Var add_row_vector(Var x, Var v) {
    same_tape(x, v, "add_row_vector");
    require_rank(x, 2, "add_row_vector");
    const Tensor& xv = x.value();
    const Tensor& vv = v.value();
    const std::size_t rows = xv.dim(0), cols = xv.dim(1);
    if (vv.size() != cols) shape_error("add_row_vector", xv.shape(), vv.shape());
    Tensor y = xv;
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) y[i * cols + j] += vv[j];
    const std::size_t ix = x.id(), iv = v.id();
    const bool rx = x.requires_grad(), rv = v.requires_grad();
    return x.tape().push(std::move(y), rx || rv, [=](Tape& t, const Tensor& g) {
        if (rx) {
            auto gx = t.grad_buffer(ix);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (rv) {
            auto gv = t.grad_buffer(iv);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) gv[j] += g[i * cols + j];
        }
    });
}

Var slice(Var a, std::size_t begin, std::size_t end) {
    require_rank(a, 1, "slice");
    if (begin > end || end > a.size()) throw std::invalid_argument("slice: range out of bounds");
    const Tensor& x = a.value();
    std::vector<double> data(x.data().begin() + static_cast<std::ptrdiff_t>(begin),
                             x.data().begin() + static_cast<std::ptrdiff_t>(end));
    const std::size_t ia = a.id();
    return a.tape().push(Tensor({end - begin}, std::move(data)), a.requires_grad(),
                         [ia, begin](Tape& t, const Tensor& g) {
                             auto ga = t.grad_buffer(ia);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[begin + i] += g[i];
                         });
}

Var element(Var a, std::size_t i) {
    require_rank(a, 1, "element");
    return reshape(slice(a, i, i + 1), Shape{});
}

Var recompute(std::span<const Var> inputs, const std::function<Var(Tape&, std::span<const Var>)>& fn) {
    if (inputs.empty()) throw std::invalid_argument("recompute: no inputs");
    Tape& tape = inputs.front().tape();
    std::vector<std::size_t> ids;
    std::vector<bool> needs;
    bool any = false;
    for (const Var& v : inputs) {
        if (&v.tape() != &tape) throw std::invalid_argument("recompute: inputs on different tapes");
        ids.push_back(v.id());
        needs.push_back(v.requires_grad());
        any = any || v.requires_grad();
    }
    Tensor out_value = [&] {
        Tape scratch;
        std::vector<Var> leaves;
        for (const Var& v : inputs) leaves.push_back(scratch.constant(v.value()));
        return fn(scratch, leaves).value();
    }();
    return tape.push(std::move(out_value), any, [ids, needs, fn](Tape& t, const Tensor& g) {
        Tape scratch;
        std::vector<Var> leaves;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            leaves.push_back(needs[k] ? scratch.parameter(t.value(ids[k])) : scratch.constant(t.value(ids[k])));
        }
        Var out = fn(scratch, leaves);
        scratch.backward(out, g);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!needs[k]) continue;
            const Tensor local = scratch.grad(leaves[k]);
            auto buf = t.grad_buffer(ids[k]);
            for (std::size_t i = 0; i < local.size(); ++i) buf[i] += local[i];
        }
    });
}

}  // namespace snella::ad
