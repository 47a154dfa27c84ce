#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "snella/model/trainer.hpp"

namespace snella {

/// Raised for malformed documents, unknown keys and out-of-range values; the message
/// names the offending key path (e.g. "sparsity.budget_ratio").
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FitMatrixSettings {
    std::size_t seeds = 0;  // 0: experiments.seeds
    std::size_t m = 32, n = 32, rank = 4;
    std::size_t target_rank = 0;  // 0: full rank
    double density = 0.1;         // fraction of nonzero target entries
    std::vector<KernelKind> kernels{KernelKind::Linear, KernelKind::PLinear, KernelKind::MixK};
    std::size_t pieces = 2;
    std::int64_t steps = 20000;
    double lr = 1e-3;
    double init_std = 2.0;
};

struct GradEvolutionSettings {
    std::size_t seeds = 0;  // 0: experiments.seeds
    std::size_t m = 32, n = 32, rank = 4;
    std::vector<KernelKind> kernels{KernelKind::Linear, KernelKind::RBF, KernelKind::MixK};
    double scale = 10.0;  // factor magnitude c
    std::int64_t steps = 200;
    double lr = 1e-3;
};

struct RankSweepSettings {
    std::size_t seeds = 0;  // 0: experiments.seeds
    std::size_t m = 64, n = 64;
    std::vector<std::size_t> ranks{1, 2, 4, 8, 16};
    std::vector<KernelKind> kernels{KernelKind::Linear, KernelKind::PLinear, KernelKind::MixK};
};

struct ScheduleSettings {
    std::int64_t initial = 1000, final = 0, steps = 10;
    std::int64_t samples = 11;  // evenly spaced t in [0, T]
};

struct MemorySettings {
    std::size_t m = 768, n = 768, layers = 12, rank = 8;
    KernelKind kernel = KernelKind::MixK;
};

struct GradCheckSettings {
    std::size_t m = 8, n = 6, rank = 3;
    std::size_t instances = 20;  // per kernel kind and per sparsified variant
    double step = 1e-6;
    double tol = 1e-5;
};

struct TrainSettings {
    std::size_t seeds = 0;  // 0: experiments.seeds
    std::vector<KernelKind> kernels{KernelKind::Linear, KernelKind::MixK};  // compared on paired seeds
};

/// A check evaluated against an experiment's aggregate metrics by run-all.
struct Assertion {
    std::string experiment;
    std::string metric;
    std::string op;  // "<", "<=", ">", ">=", "==", "~=" (|x - value| <= tol)
    double value = 0.0;
    double tol = 0.0;
};

struct ExperimentSettings {
    std::vector<std::string> run;  // experiment names, in order
    std::uint64_t seed = 0;
    std::size_t seeds = 5;
    bool parallel = true;
    FitMatrixSettings fit_matrix;
    GradEvolutionSettings grad_evolution;
    RankSweepSettings rank_sweep;
    ScheduleSettings schedule;
    MemorySettings memory_model;
    TrainSettings train;
    GradCheckSettings grad_check;
    std::vector<Assertion> assertions;
};

struct RunConfig {
    DatasetConfig data;     // "model"
    TrainerConfig trainer;  // "kernel", "sparsity", "train"
    ExperimentSettings experiments;

    /// b_T: budget_ratio x adaptable weights of the configured model (biases excluded).
    std::int64_t final_budget() const;
};

const std::vector<std::string>& experiment_names();

RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);
void save_config(const RunConfig& config, const std::filesystem::path& path);

/// Total element count of every adapted matrix of `model`.
std::int64_t adaptable_weights(const ModelSpec& model);

}  // namespace snella
