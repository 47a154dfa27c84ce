#pragma once

#include <cstdint>
#include <vector>

#include "snella/autodiff/tensor.hpp"

namespace snella {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

/// Bias-corrected adaptive-moment optimizer over a fixed list of parameter tensors.
/// No weight decay.
class Adam {
public:
    Adam() = default;
    explicit Adam(AdamConfig config) : config_(config) { config_.validate(); }

    /// Updates params[i] in place with grads[i]. Moment buffers are created on the first
    /// call and shapes must not change afterwards.
    void step(std::vector<ad::Tensor*> params, const std::vector<ad::Tensor>& grads);

    std::int64_t steps() const { return t_; }
    const AdamConfig& config() const { return config_; }

private:
    AdamConfig config_;
    std::int64_t t_ = 0;
    std::vector<ad::Tensor> m_, v_;
};

}  // namespace snella
