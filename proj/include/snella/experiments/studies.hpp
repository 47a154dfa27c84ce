#pragma once

#include <cstdint>
#include <vector>

#include "snella/allocation/budget.hpp"
#include "snella/experiments/report.hpp"
#include "snella/io/config.hpp"
#include "snella/io/svg.hpp"

namespace snella {

// ---- matrix fitting

/// Target of the fitting study: Gaussian entries (or a rank-k product when target_rank > 0),
/// each kept with probability `density`.
ad::Tensor fit_target(const FitMatrixSettings& s, std::uint64_t seed);

struct FitOutcome {
    double final_mse = 0.0;
    std::vector<std::pair<std::int64_t, double>> curve;  // (step, mse) samples
};

/// Adam on the factors and coefficients of one kernel merge against `target`. Throws
/// std::runtime_error when the loss stops being finite.
FitOutcome fit_matrix(KernelKind kind, const ad::Tensor& target, const FitMatrixSettings& s, std::uint64_t seed);

ExperimentReport fit_matrix_experiment(const FitMatrixSettings& s, const std::vector<std::uint64_t>& seeds,
                                       bool parallel);

// ---- gradient magnitude during fitting at factor scale c

/// Mean |dL/dA|, |dL/dB| per step while fitting a Gaussian target from factors drawn
/// uniformly in [-c, c] with all kernel coefficients at 1.
std::vector<double> grad_evolution_trace(KernelKind kind, const GradEvolutionSettings& s, std::uint64_t seed);

ExperimentReport grad_evolution_experiment(const GradEvolutionSettings& s, const std::vector<std::uint64_t>& seeds,
                                           bool parallel);

// ---- numerical rank of merges

ExperimentReport rank_sweep(const RankSweepSettings& s, const std::vector<std::uint64_t>& seeds, bool parallel);

// ---- allocation traces

/// One row per (epoch, layer): budget, capacity and sparsity ratio 1 - b / cap.
/// Throws std::invalid_argument for a trace without epochs.
Table alloc_trace_table(const RunTrace& trace);
Heatmap alloc_heatmap(const RunTrace& trace);

ExperimentReport alloc_trace_experiment(const DatasetConfig& data, const TrainerConfig& trainer,
                                        const std::vector<std::uint64_t>& seeds, bool parallel);

// ---- fine-tuning comparison on paired seeds

/// Seed s uses dataset seed data.seed + s and trainer seed trainer.seed + s for every kernel.
ExperimentReport train_experiment(const DatasetConfig& data, const TrainerConfig& trainer, const TrainSettings& s,
                                  const std::vector<std::uint64_t>& seeds, bool parallel);

// ---- budget schedules

/// Columns t, constant, linear, quadratic, cubic at `samples` evenly spaced steps.
Table schedule_table(const BudgetSchedule& schedule, std::int64_t samples);
ExperimentReport schedule_experiment(const ScheduleSettings& s);

// ---- analytic memory model

enum class MemoryMode { FullFT, LowRank, LowRankStoringDelta };
std::string_view memory_mode_name(MemoryMode mode);

struct LayerDims {
    std::size_t m = 0, n = 0;
};

struct MemoryFootprint {
    std::int64_t optimizer_params = 0;  // floats updated by the optimizer
    std::int64_t optimizer_state = 0;   // Adam moments, two per optimized float
    std::int64_t stored_floats = 0;     // frozen base + optimized + state (+ retained merges)
};

/// FullFT optimizes every m n; LowRank optimizes (m + n) r plus the kernel coefficients of
/// each layer; LowRankStoringDelta additionally keeps each merged m x n update.
MemoryFootprint memory_footprint_estimate(const std::vector<LayerDims>& layers, std::size_t rank,
                                          const KernelSpec& kernel, MemoryMode mode);
ExperimentReport memory_model_experiment(const MemorySettings& s);

// ---- gradient fidelity

/// Recorded gradients against central differences for every kernel kind and for the
/// SoftSign / LiteralProduct sparsified MixK merge (threshold held fixed, instances with
/// an entry near the threshold are redrawn).
ExperimentReport grad_check_experiment(const GradCheckSettings& s, std::uint64_t seed);

}  // namespace snella
