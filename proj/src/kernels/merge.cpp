#include "snella/kernels/merge.hpp"

#include <cmath>
#include <stdexcept>

namespace snella {

using ad::Tensor;
using ad::Var;

void LowRankPair::validate() const {
    ad::require_matrix(A, "LowRankPair::A");
    ad::require_matrix(B, "LowRankPair::B");
    if (A.dim(1) != B.dim(1)) {
        throw std::invalid_argument("factor ranks differ: A " + ad::shape_string(A.shape()) + ", B " +
                                    ad::shape_string(B.shape()));
    }
    if (rank() > std::min(rows(), cols())) throw std::invalid_argument("rank exceeds min(m, n)");
}

LowRankPair LowRankPair::initialize(std::size_t m, std::size_t n, std::size_t r, KernelKind kind,
                                    std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> normal(0.0, stddev);
    LowRankPair pair{Tensor({n, r}), Tensor({m, r})};
    for (double& v : pair.A.data()) v = normal(rng);
    for (double& v : pair.B.data()) v = normal(rng);
    if (kind == KernelKind::Linear) std::fill(pair.B.data().begin(), pair.B.data().end(), 0.0);
    pair.validate();
    return pair;
}

std::vector<ad::Segment> segment_bounds(std::size_t rank, std::size_t pieces) {
    if (pieces < 1) throw std::invalid_argument("piece count must be at least 1");
    if (pieces > rank) {
        throw std::invalid_argument("piece count " + std::to_string(pieces) + " exceeds rank " + std::to_string(rank));
    }
    std::vector<ad::Segment> out;
    out.reserve(pieces);
    for (std::size_t p = 0; p < pieces; ++p) out.emplace_back(rank * p / pieces, rank * (p + 1) / pieces);
    return out;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double squared_distance(std::span<const double> a, std::span<const double> b, std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t k = lo; k < hi; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return s;
}

double piecewise(const KernelSpec& spec, std::span<const double> a, std::span<const double> b) {
    const auto bounds = segment_bounds(a.size(), spec.pieces);
    double s = 0.0;
    for (std::size_t p = 0; p < bounds.size(); ++p)
        s += spec.alpha_p[p] * std::sqrt(squared_distance(a, b, bounds[p].first, bounds[p].second));
    return s;
}

Var piecewise(const KernelSpec& spec, Var A, Var B, Var coeffs) {
    const std::size_t m = B.shape()[0], n = A.shape()[0], r = A.shape()[1];
    const auto bounds = segment_bounds(r, spec.pieces);
    const std::size_t P = bounds.size();
    Var norms = ad::segment_l2norm(ad::pairwise_difference(B, A), bounds);  // m x n x P
    Var weights = ad::reshape(ad::slice(coeffs, 0, P), {P, 1});
    return ad::reshape(ad::matmul(ad::reshape(norms, {m * n, P}), weights), {m, n});
}

Var squared_distances(Var A, Var B) { return ad::sum(ad::square(ad::pairwise_difference(B, A)), 2); }

}  // namespace

double kernel_eval(const KernelSpec& spec, std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("kernel_eval: length mismatch " + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
    }
    spec.validate(a.size());
    switch (spec.kind) {
        case KernelKind::Linear: return dot(a, b);
        case KernelKind::PLinear: return piecewise(spec, a, b);
        case KernelKind::Sigmoid:
            return spec.sig_alpha / (1.0 + std::exp(-spec.sig_beta * dot(a, b))) + spec.sig_gamma;
        case KernelKind::RBF:
            return spec.rbf_alpha * std::exp(-spec.rbf_beta * squared_distance(a, b, 0, a.size())) + spec.rbf_gamma;
        case KernelKind::RBFNormalized: return spec.rbf_alpha + spec.rbf_gamma;
        case KernelKind::MixK: return piecewise(spec, a, b) + spec.alpha + spec.beta;
    }
    throw std::logic_error("unreachable kernel kind");
}

Var merge(const KernelSpec& spec, Var A, Var B, Var coeffs) {
    if (A.value().rank() != 2 || B.value().rank() != 2 || A.shape()[1] != B.shape()[1]) {
        throw std::invalid_argument("merge: factors must be n x r and m x r, got A " + ad::shape_string(A.shape()) +
                                    ", B " + ad::shape_string(B.shape()));
    }
    if (coeffs.size() != spec.coefficient_count()) {
        throw std::invalid_argument("merge: expected " + std::to_string(spec.coefficient_count()) +
                                    " coefficients, got " + std::to_string(coeffs.size()));
    }
    const std::size_t r = A.shape()[1];
    if (spec.uses_pieces() && (spec.pieces < 1 || spec.pieces > r)) {
        throw std::invalid_argument("merge: piece count must lie in [1, rank]");
    }
    auto c = [&](std::size_t i) { return ad::element(coeffs, i); };

    switch (spec.kind) {
        case KernelKind::Linear: return ad::matmul(B, ad::transpose(A));
        case KernelKind::PLinear: return piecewise(spec, A, B, coeffs);
        case KernelKind::Sigmoid: {
            Var lin = ad::matmul(B, ad::transpose(A));
            return c(0) * ad::sigmoid(c(1) * lin) + c(2);
        }
        case KernelKind::RBF: return c(0) * ad::exp(-(c(1) * squared_distances(A, B))) + c(2);
        case KernelKind::RBFNormalized:
            return c(0) * ad::softmax(-(c(1) * squared_distances(A, B)), 0) + c(2);
        case KernelKind::MixK: {
            Var kp = piecewise(spec, A, B, coeffs);
            const std::size_t P = spec.pieces;
            return kp + c(P) * ad::softmax(kp, 0) + c(P + 1);
        }
    }
    throw std::logic_error("unreachable kernel kind");
}

Tensor merge(const KernelSpec& spec, const LowRankPair& pair) {
    pair.validate();
    spec.validate(pair.rank());
    ad::Tape tape;
    return merge(spec, tape.constant(pair.A), tape.constant(pair.B), tape.constant(spec.coefficients())).value();
}

}  // namespace snella
