#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "snella/model/tiny_model.hpp"

namespace snella {

enum class TaskKind { HighRankRegression, BlobClassification };

std::string_view task_name(TaskKind kind);  // "high-rank-regression", "blob-classification"
TaskKind parse_task(std::string_view name);

struct DatasetConfig {
    TaskKind kind = TaskKind::HighRankRegression;
    std::uint64_t seed = 0;
    std::size_t samples = 256;
    ModelSpec model;
    // regression: sparse perturbation of the frozen weights
    std::vector<std::size_t> perturbed_layers;  // empty: every layer
    double density = 0.2;
    double scale = 1.0;           // perturbation entries ~ N(0, (scale / sqrt(n))^2)
    std::size_t min_rank = 4;     // each perturbation is redrawn until its numerical rank exceeds this
    double noise = 0.0;           // label noise stddev
    // classification
    std::size_t classes = 4;
    double cluster_spread = 0.5;

    void validate() const;
};

struct Dataset {
    TaskKind kind = TaskKind::HighRankRegression;
    ModelSpec model;
    BaseWeights base;
    ad::Tensor inputs;                       // N x input_dim
    ad::Tensor targets;                      // N x output_dim (one-hot for classification)
    std::vector<std::size_t> labels;         // classification only
    std::vector<ad::Tensor> perturbations;   // per layer, zero where unperturbed

    std::size_t size() const { return inputs.dim(0); }
};

/// Seed-deterministic. For regression the labels come from the base model with every
/// selected layer's weight shifted by its perturbation.
Dataset synth_dataset(const DatasetConfig& config);

}  // namespace snella
