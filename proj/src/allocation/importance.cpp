#include "snella/allocation/importance.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace snella {
namespace {

void require_same_shape(const ad::Tensor& a, const ad::Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + ad::shape_string(a.shape()) + " vs " +
                                    ad::shape_string(b.shape()));
    }
}

void ema(ad::Tensor& sens, ad::Tensor& unc, const ad::Tensor& raw, double beta1, double beta2) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
        // a steady stream must stay put bit-for-bit, which the blend alone does not guarantee
        if (sens[i] != raw[i]) sens[i] = beta1 * sens[i] + (1.0 - beta1) * raw[i];
        unc[i] = beta2 * unc[i] + (1.0 - beta2) * std::abs(sens[i] - raw[i]);
    }
}

double mean_abs(const ad::Tensor& t) {
    if (t.size() == 0) return 0.0;
    double s = 0.0;
    for (double v : t.data()) s += std::abs(v);
    return s / static_cast<double>(t.size());
}

double mean_product(const ad::Tensor& a, const ad::Tensor& b) {
    if (a.size() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s / static_cast<double>(a.size());
}

}  // namespace

ad::Tensor sensitivity(const ad::Tensor& param, const ad::Tensor& grad) {
    require_same_shape(param, grad, "sensitivity");
    ad::Tensor out(param.shape());
    for (std::size_t i = 0; i < param.size(); ++i) out[i] = std::abs(grad[i] * param[i]);
    return out;
}

void update_importance(ImportanceState& state, const ad::Tensor& raw_a, const ad::Tensor& raw_b) {
    if (state.beta1 < 0.0 || state.beta1 > 1.0 || state.beta2 < 0.0 || state.beta2 > 1.0) {
        throw std::invalid_argument("smoothing constants must lie in [0, 1]");
    }
    if (!state.initialized()) {
        state.sens_a = raw_a;
        state.sens_b = raw_b;
        state.unc_a = ad::Tensor::zeros(raw_a.shape());
        state.unc_b = ad::Tensor::zeros(raw_b.shape());
        state.steps = 1;
        return;
    }
    require_same_shape(state.sens_a, raw_a, "update_importance");
    require_same_shape(state.sens_b, raw_b, "update_importance");
    ema(state.sens_a, state.unc_a, raw_a, state.beta1, state.beta2);
    ema(state.sens_b, state.unc_b, raw_b, state.beta1, state.beta2);
    ++state.steps;
}

std::string_view metric_name(ImportanceMetric metric) {
    switch (metric) {
        case ImportanceMetric::Sensitivity: return "sensitivity";
        case ImportanceMetric::Magnitude: return "magnitude";
        case ImportanceMetric::WMagnitude: return "w-magnitude";
    }
    return "?";
}

ImportanceMetric parse_metric(std::string_view name) {
    for (auto m : {ImportanceMetric::Sensitivity, ImportanceMetric::Magnitude, ImportanceMetric::WMagnitude})
        if (metric_name(m) == name) return m;
    throw std::invalid_argument("unknown importance metric '" + std::string(name) + "'");
}

double layer_score(ImportanceMetric metric, const LayerScoreInputs& in) {
    switch (metric) {
        case ImportanceMetric::Sensitivity:
            if (!in.state || !in.state->initialized()) {
                throw std::invalid_argument("sensitivity score needs an importance state updated at least once");
            }
            return mean_product(in.state->sens_a, in.state->unc_a) + mean_product(in.state->sens_b, in.state->unc_b);
        case ImportanceMetric::Magnitude:
            if (!in.A || !in.B) throw std::invalid_argument("magnitude score needs both factors");
            return mean_abs(*in.A) + mean_abs(*in.B);
        case ImportanceMetric::WMagnitude:
            if (!in.merged) throw std::invalid_argument("w-magnitude score needs the merged matrix");
            return mean_abs(*in.merged);
    }
    throw std::logic_error("unreachable metric");
}

}  // namespace snella
