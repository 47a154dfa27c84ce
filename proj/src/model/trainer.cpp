#include "snella/model/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace snella {

using ad::Tensor;
using ad::Var;

std::string_view period_name(AllocationPeriod p) {
    switch (p) {
        case AllocationPeriod::PerEpoch: return "per-epoch";
        case AllocationPeriod::PerStep: return "per-step";
    }
    return "?";
}

AllocationPeriod parse_period(std::string_view name) {
    for (auto p : {AllocationPeriod::PerEpoch, AllocationPeriod::PerStep})
        if (period_name(p) == name) return p;
    throw std::invalid_argument("unknown allocation period '" + std::string(name) + "'");
}

void TrainerConfig::validate() const {
    adam.validate();
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (steps_per_epoch < 1) throw std::invalid_argument("steps_per_epoch must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (rank < 1) throw std::invalid_argument("rank must be >= 1");
    if (!(init_std > 0.0)) throw std::invalid_argument("init_std must be positive");
    if (!(budget_ratio >= 0.0 && budget_ratio <= 1.0)) throw std::invalid_argument("budget_ratio must lie in [0, 1]");
    if (schedule_steps < 0) throw std::invalid_argument("schedule_steps must be >= 0");
    if (importance_beta1 < 0.0 || importance_beta1 > 1.0 || importance_beta2 < 0.0 || importance_beta2 > 1.0) {
        throw std::invalid_argument("importance smoothing constants must lie in [0, 1]");
    }
    if (kernel.uses_pieces() && kernel.pieces < 1) throw std::invalid_argument("pieces must be >= 1");
}

std::int64_t TrainerConfig::horizon() const {
    if (schedule_steps > 0) return schedule_steps;
    return std::max<std::int64_t>(1, (epochs - 1) * steps_per_epoch);
}

std::vector<std::size_t> epoch_permutation(std::uint64_t seed, std::int64_t epoch, std::size_t n) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
}

std::vector<std::size_t> batch_indices(const std::vector<std::size_t>& perm, std::int64_t step, std::size_t batch) {
    if (perm.empty()) throw std::invalid_argument("empty permutation");
    std::vector<std::size_t> out(batch);
    const std::size_t start = static_cast<std::size_t>(step) * batch;
    for (std::size_t i = 0; i < batch; ++i) out[i] = perm[(start + i) % perm.size()];
    return out;
}

namespace {

Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
    const std::size_t cols = t.dim(1);
    Tensor out({rows.size(), cols});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = t.at(rows[i], j);
    return out;
}

double sq_norm(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return s;
}

}  // namespace

Trainer::Trainer(const TrainerConfig& config, const Dataset& data) : config_(config), data_(&data) {
    config_.validate();
    if (data.size() == 0) throw std::invalid_argument("empty dataset");
    std::mt19937_64 rng(config_.seed);
    model_ = TinyModel(data.model, data.base, config_.kernel, config_.rank, rng, config_.init_std);
    ImportanceState fresh;
    fresh.beta1 = config_.importance_beta1;
    fresh.beta2 = config_.importance_beta2;
    importance_.assign(model_.layers().size(), fresh);
    adam_ = Adam(config_.adam);
    for (const auto& l : model_.layers()) coeffs_.push_back(l.spec.coefficients());

    const auto caps = model_.capacities();
    schedule_.initial = std::accumulate(caps.begin(), caps.end(), std::int64_t{0});
    schedule_.final = std::llround(config_.budget_ratio * static_cast<double>(schedule_.initial));
    schedule_.steps = config_.horizon();
    schedule_.kind = config_.schedule;
    schedule_.validate();
}

Var Trainer::loss(Var prediction, const Tensor& targets) const {
    Var y = prediction.tape().constant(targets);
    if (data_->kind == TaskKind::HighRankRegression) return ad::mean(ad::square(prediction - y));
    const double batch = static_cast<double>(targets.dim(0));
    return ad::scale(ad::sum(y * ad::log_softmax(prediction, 1)), -1.0 / batch);
}

double Trainer::train_step() {
    const std::int64_t epoch = step_ / config_.steps_per_epoch, pos = step_ % config_.steps_per_epoch;
    if (pos == 0 || perm_.empty()) perm_ = epoch_permutation(config_.seed, epoch, data_->size());
    const auto rows = batch_indices(perm_, pos, config_.batch_size);
    const Tensor x = gather_rows(data_->inputs, rows), y = gather_rows(data_->targets, rows);

    ad::Tape tape;
    const ModelVars vars = model_.bind(tape);
    Var out = loss(model_.forward(tape.constant(x), vars, {.mode = config_.mode, .recompute = config_.recompute_merge}),
                   y);
    const double value = out.value().item();
    if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite loss " << value << " at step " << step_ << " (kernel " << kernel_name(config_.kernel.kind)
            << ", lr " << config_.adam.lr << ")";
        throw std::runtime_error(msg.str());
    }
    tape.backward(out);

    auto& layers = model_.layers();
    std::vector<Tensor*> params;
    std::vector<Tensor> grads;
    grad_norms_.assign(layers.size(), 0.0);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Tensor gA = tape.grad(vars.layers[l].A), gB = tape.grad(vars.layers[l].B), gc = tape.grad(vars.layers[l].coeffs);
        update_importance(importance_[l], sensitivity(layers[l].pair.A, gA), sensitivity(layers[l].pair.B, gB));
        grad_norms_[l] = std::sqrt(sq_norm(gA) + sq_norm(gB) + sq_norm(gc));
        params.insert(params.end(), {&layers[l].pair.A, &layers[l].pair.B, &coeffs_[l]});
        grads.push_back(std::move(gA));
        grads.push_back(std::move(gB));
        grads.push_back(std::move(gc));
    }
    adam_.step(params, grads);
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l].spec.set_coefficients(coeffs_[l]);
    ++step_;
    return value;
}

AllocationEvent Trainer::reallocate() {
    AllocationEvent ev;
    ev.step = std::min(step_, schedule_.steps);
    ev.global_budget = budget_at(schedule_, ev.step);
    const auto& layers = model_.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        LayerScoreInputs in{.state = &importance_[l], .A = &layers[l].pair.A, .B = &layers[l].pair.B};
        Tensor merged;
        if (config_.metric == ImportanceMetric::WMagnitude) {
            merged = layers[l].delta(config_.mode);
            in.merged = &merged;
        }
        ev.scores.push_back(layer_score(config_.metric, in));
    }
    const auto caps = model_.capacities();
    ev.result = alloc(ev.scores, caps, ev.global_budget);
    model_.set_budgets(ev.result.budgets);
    return ev;
}

double Trainer::evaluate() const {
    ad::Tape tape;
    Var pred = model_.forward(tape.constant(data_->inputs), model_.bind(tape, false), {.mode = config_.mode});
    return loss(pred, data_->targets).value().item();
}

double Trainer::evaluate_base() const {
    ad::Tape tape;
    Var pred = model_.forward(tape.constant(data_->inputs), {}, {.base_only = true});
    return loss(pred, data_->targets).value().item();
}

RunTrace fine_tune(const TrainerConfig& config, const Dataset& data, TinyModel* final_model) {
    Trainer trainer(config, data);
    RunTrace trace;
    for (const auto& l : trainer.model().layers()) trace.layer_names.push_back(l.name);
    trace.capacities = trainer.model().capacities();
    trace.base_loss = trainer.evaluate_base();
    trace.initial_loss = trainer.evaluate();
    trace.final_loss = trace.initial_loss;

    const std::size_t L = trace.capacities.size();
    for (std::int64_t e = 0; e < config.epochs; ++e) {
        const bool last_epoch = e + 1 == config.epochs;
        EpochRecord rec;
        rec.epoch = e;
        rec.budgets = trainer.model().budgets();
        for (std::size_t l = 0; l < L; ++l)
            rec.sparsity.push_back(1.0 - static_cast<double>(rec.budgets[l]) / static_cast<double>(trace.capacities[l]));
        rec.grad_norms.assign(L, 0.0);

        double loss_sum = 0.0;
        for (std::int64_t s = 0; s < config.steps_per_epoch; ++s) {
            const double loss = trainer.train_step();
            trace.step_losses.push_back(loss);
            loss_sum += loss;
            for (std::size_t l = 0; l < L; ++l) rec.grad_norms[l] += trainer.last_grad_norms()[l];
            const bool last_step = last_epoch && s + 1 == config.steps_per_epoch;
            if (config.period == AllocationPeriod::PerStep && !last_step) trace.allocations.push_back(trainer.reallocate());
        }
        const double steps = static_cast<double>(config.steps_per_epoch);
        rec.train_loss = loss_sum / steps;
        for (double& g : rec.grad_norms) g /= steps;
        rec.eval_loss = trainer.evaluate();
        trace.final_loss = rec.eval_loss;
        trace.epochs.push_back(std::move(rec));
        if (config.period == AllocationPeriod::PerEpoch && !last_epoch) trace.allocations.push_back(trainer.reallocate());
    }
    if (final_model) *final_model = trainer.model();
    return trace;
}

}  // namespace snella
