#include "snella/model/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace snella {

void AdamConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("adam: learning rate must be finite and >= 0");
    if (beta1 < 0.0 || beta1 >= 1.0) throw std::invalid_argument("adam: beta1 must lie in [0, 1)");
    if (beta2 < 0.0 || beta2 >= 1.0) throw std::invalid_argument("adam: beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) throw std::invalid_argument("adam: eps must be positive");
}

void Adam::step(std::vector<ad::Tensor*> params, const std::vector<ad::Tensor>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam: parameter/gradient count mismatch");
    if (m_.empty()) {
        for (const ad::Tensor* p : params) {
            m_.push_back(ad::Tensor::zeros(p->shape()));
            v_.push_back(ad::Tensor::zeros(p->shape()));
        }
    }
    if (m_.size() != params.size()) throw std::invalid_argument("adam: parameter list changed between steps");

    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        ad::Tensor& p = *params[k];
        const ad::Tensor& g = grads[k];
        if (p.shape() != g.shape() || p.shape() != m_[k].shape()) {
            throw std::invalid_argument("adam: shape mismatch for parameter " + std::to_string(k));
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            m_[k][i] = config_.beta1 * m_[k][i] + (1.0 - config_.beta1) * g[i];
            v_[k][i] = config_.beta2 * v_[k][i] + (1.0 - config_.beta2) * g[i] * g[i];
            const double mhat = m_[k][i] / c1, vhat = v_[k][i] / c2;
            p[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }
}

}  // namespace snella
