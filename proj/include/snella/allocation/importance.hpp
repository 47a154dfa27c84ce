#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

#include "snella/autodiff/tensor.hpp"

namespace snella {

/// Elementwise |grad * param|.
ad::Tensor sensitivity(const ad::Tensor& param, const ad::Tensor& grad);

/// Smoothed sensitivity and uncertainty for one layer's factor pair.
///
/// The first update seeds the smoothed sensitivity with the raw value and the
/// uncertainty with zero; later updates apply
///   I_bar <- beta1 * I_bar + (1 - beta1) * I
///   U_bar <- beta2 * U_bar + (1 - beta2) * |I_bar_new - I|
struct ImportanceState {
    double beta1 = 0.85;
    double beta2 = 0.85;
    std::size_t steps = 0;  // updates applied so far
    ad::Tensor sens_a, sens_b;
    ad::Tensor unc_a, unc_b;

    bool initialized() const { return steps > 0; }
};

void update_importance(ImportanceState& state, const ad::Tensor& raw_a, const ad::Tensor& raw_b);

enum class ImportanceMetric { Sensitivity, Magnitude, WMagnitude };

std::string_view metric_name(ImportanceMetric metric);
ImportanceMetric parse_metric(std::string_view name);

struct LayerScoreInputs {
    const ImportanceState* state = nullptr;  // Sensitivity
    const ad::Tensor* A = nullptr;           // Magnitude
    const ad::Tensor* B = nullptr;           // Magnitude
    const ad::Tensor* merged = nullptr;      // WMagnitude
};

/// Layer importance p >= 0:
///   Sensitivity -> mean(I_bar_A * U_bar_A) + mean(I_bar_B * U_bar_B)
///   Magnitude   -> mean|A| + mean|B|
///   WMagnitude  -> mean|Delta W|
/// Throws std::invalid_argument when an input the metric needs is missing.
double layer_score(ImportanceMetric metric, const LayerScoreInputs& in);

}  // namespace snella
