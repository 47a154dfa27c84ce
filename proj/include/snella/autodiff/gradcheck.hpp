#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "snella/autodiff/tape.hpp"

namespace snella::ad {

/// Raised when a program evaluates to NaN/inf during a gradient check, which usually
/// means the configuration is numerically unstable (e.g. an unnormalised RBF overflowing).
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GradientReport {
    std::vector<double> max_rel_error;  // one per parameter
    double step = 0.0;
    bool passed = false;

    double worst() const;
};

/// Compares recorded gradients with central differences (f(x+h) - f(x-h)) / 2h, one
/// coordinate at a time. Relative error is |g - fd| / max(|g|, |fd|); when both are
/// below 1e-8 the absolute difference is used instead.
GradientReport finite_diff_check(const Program& program, std::span<const Tensor> params, double h, double tol);

}  // namespace snella::ad
