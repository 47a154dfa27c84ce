#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "snella/allocation/budget.hpp"
#include "snella/allocation/importance.hpp"
#include "snella/model/adam.hpp"
#include "snella/model/dataset.hpp"

namespace snella {

enum class AllocationPeriod { PerEpoch, PerStep };

std::string_view period_name(AllocationPeriod p);  // "per-epoch", "per-step"
AllocationPeriod parse_period(std::string_view name);

struct TrainerConfig {
    AdamConfig adam{.lr = 1e-2};
    std::int64_t epochs = 10;
    std::int64_t steps_per_epoch = 8;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;

    KernelSpec kernel = KernelSpec::make(KernelKind::MixK, 2);
    std::size_t rank = 4;
    double init_std = 1.0;

    double budget_ratio = 0.3;  // b_T / b_0
    ScheduleKind schedule = ScheduleKind::Cubic;
    /// Step at which the schedule reaches b_T. 0 picks the first step of the last epoch.
    std::int64_t schedule_steps = 0;
    ImportanceMetric metric = ImportanceMetric::Sensitivity;
    double importance_beta1 = 0.85;
    double importance_beta2 = 0.85;
    AllocationPeriod period = AllocationPeriod::PerEpoch;
    SparsifyMode mode = SparsifyMode::SoftSign;
    bool recompute_merge = false;

    void validate() const;
    std::int64_t total_steps() const { return epochs * steps_per_epoch; }
    std::int64_t horizon() const;
};

struct AllocationEvent {
    std::int64_t step = 0;  // global step the schedule was sampled at
    std::int64_t global_budget = 0;
    std::vector<double> scores;
    AllocationResult result;
};

struct EpochRecord {
    std::int64_t epoch = 0;
    double train_loss = 0.0;  // mean over the epoch's steps
    double eval_loss = 0.0;   // full dataset, after the epoch
    std::vector<std::int64_t> budgets;  // installed while the epoch ran
    std::vector<double> sparsity;       // 1 - budget / capacity
    std::vector<double> grad_norms;     // mean l2 norm of (A, B, coeffs) gradients
};

struct RunTrace {
    std::vector<std::string> layer_names;
    std::vector<std::int64_t> capacities;
    double initial_loss = 0.0;
    double base_loss = 0.0;
    std::vector<double> step_losses;
    std::vector<EpochRecord> epochs;
    std::vector<AllocationEvent> allocations;
    double final_loss = 0.0;
};

/// Per-epoch shuffled sample order, derived from (seed, epoch).
std::vector<std::size_t> epoch_permutation(std::uint64_t seed, std::int64_t epoch, std::size_t n);

/// Indices of minibatch `step` within an epoch: consecutive slices of the permutation,
/// wrapping around its end.
std::vector<std::size_t> batch_indices(const std::vector<std::size_t>& perm, std::int64_t step, std::size_t batch);

class Trainer {
public:
    Trainer(const TrainerConfig& config, const Dataset& data);

    /// One optimisation step on the next minibatch. Throws std::runtime_error on a
    /// non-finite loss.
    double train_step();
    /// Samples the schedule at the current global step, scores layers, runs alloc and
    /// installs the budgets.
    AllocationEvent reallocate();
    /// Loss over the full dataset with the current adapters.
    double evaluate() const;
    double evaluate_base() const;

    const TinyModel& model() const { return model_; }
    TinyModel& model() { return model_; }
    const std::vector<ImportanceState>& importance() const { return importance_; }
    const BudgetSchedule& schedule() const { return schedule_; }
    std::int64_t global_step() const { return step_; }
    const std::vector<double>& last_grad_norms() const { return grad_norms_; }

private:
    ad::Var loss(ad::Var prediction, const ad::Tensor& targets) const;

    TrainerConfig config_;
    const Dataset* data_;
    TinyModel model_;
    std::vector<ImportanceState> importance_;
    Adam adam_;
    std::vector<ad::Tensor> coeffs_;
    BudgetSchedule schedule_;
    std::int64_t step_ = 0;
    std::vector<std::size_t> perm_;
    std::vector<double> grad_norms_;
};

/// Runs the whole schedule and returns the trace. Deterministic for a fixed config.
RunTrace fine_tune(const TrainerConfig& config, const Dataset& data, TinyModel* final_model = nullptr);

}  // namespace snella
