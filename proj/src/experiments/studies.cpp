#include "snella/experiments/studies.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "snella/allocation/sparsify.hpp"
#include "snella/autodiff/gradcheck.hpp"
#include "snella/io/checkpoint.hpp"
#include "snella/kernels/analysis.hpp"
#include "snella/model/adam.hpp"

namespace snella {

using ad::Tensor;
using ad::Var;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string lower_name(KernelKind k) { return std::string(kernel_name(k)); }

std::vector<std::string> names_of(const std::vector<KernelKind>& kinds) {
    std::vector<std::string> out;
    for (auto k : kinds) out.push_back(lower_name(k));
    return out;
}

Tensor gaussian(ad::Shape shape, std::mt19937_64& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> nd(0.0, stddev);
    for (double& v : t.data()) v = nd(rng);
    return t;
}

Tensor uniform(ad::Shape shape, std::mt19937_64& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : t.data()) v = u(rng);
    return t;
}

double mean_abs(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (double v : a.data()) s += std::abs(v);
    for (double v : b.data()) s += std::abs(v);
    return s / static_cast<double>(a.size() + b.size());
}

void finish(ExperimentReport& r, Clock::time_point t0) {
    r.aggregate = aggregate_metrics(r.per_seed);
    r.seconds = seconds_since(t0);
}

}  // namespace

// ------------------------------------------------------------------ fitting

Tensor fit_target(const FitMatrixSettings& s, std::uint64_t seed) {
    if (s.target_rank > std::min(s.m, s.n)) throw std::invalid_argument("target rank exceeds min(m, n)");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::bernoulli_distribution keep(s.density);
    Tensor t({s.m, s.n});
    if (s.target_rank == 0) {
        for (double& v : t.data()) {
            const double g = nd(rng);
            v = keep(rng) ? g : 0.0;
        }
        return t;
    }
    const std::size_t k = s.target_rank;
    const Tensor U = gaussian({s.m, k}, rng), V = gaussian({s.n, k}, rng);
    const double norm = 1.0 / std::sqrt(static_cast<double>(k));
    for (std::size_t i = 0; i < s.m; ++i)
        for (std::size_t j = 0; j < s.n; ++j) {
            double acc = 0.0;
            for (std::size_t q = 0; q < k; ++q) acc += U.at(i, q) * V.at(j, q);
            t.at(i, j) = keep(rng) ? acc * norm : 0.0;
        }
    return t;
}

FitOutcome fit_matrix(KernelKind kind, const Tensor& target, const FitMatrixSettings& s, std::uint64_t seed) {
    std::mt19937_64 rng(seed * 7919 + 1);
    LowRankPair pair = LowRankPair::initialize(s.m, s.n, s.rank, kind, rng, s.init_std);
    const KernelSpec spec = KernelSpec::make(kind, std::min(s.pieces, s.rank));
    Tensor coeffs = spec.coefficients();
    Adam adam(AdamConfig{.lr = s.lr});
    const std::int64_t every = std::max<std::int64_t>(1, s.steps / 200);

    FitOutcome out;
    auto loss_of = [&](ad::Tape& tape, Var A, Var B, Var c) {
        return ad::mean(ad::square(merge(spec, A, B, c) - tape.constant(target)));
    };
    for (std::int64_t step = 0; step < s.steps; ++step) {
        ad::Tape tape;
        Var A = tape.parameter(pair.A), B = tape.parameter(pair.B), c = tape.parameter(coeffs);
        Var loss = loss_of(tape, A, B, c);
        const double value = loss.value().item();
        if (!std::isfinite(value)) {
            throw std::runtime_error(lower_name(kind) + " diverged at step " + std::to_string(step));
        }
        if (step % every == 0) out.curve.emplace_back(step, value);
        tape.backward(loss);
        adam.step({&pair.A, &pair.B, &coeffs}, {tape.grad(A), tape.grad(B), tape.grad(c)});
    }
    ad::Tape tape;
    out.final_mse = loss_of(tape, tape.constant(pair.A), tape.constant(pair.B), tape.constant(coeffs)).value().item();
    if (!std::isfinite(out.final_mse)) throw std::runtime_error(lower_name(kind) + " diverged at the last step");
    out.curve.emplace_back(s.steps, out.final_mse);
    return out;
}

ExperimentReport fit_matrix_experiment(const FitMatrixSettings& s, const std::vector<std::uint64_t>& seeds,
                                       bool parallel) {
    const auto t0 = Clock::now();
    ExperimentReport r;
    r.name = "fit-matrix";
    r.seeds = seeds;
    r.config = {{"m", s.m},         {"n", s.n},       {"rank", s.rank},  {"target_rank", s.target_rank},
                {"density", s.density}, {"pieces", s.pieces}, {"steps", s.steps}, {"lr", s.lr},
                {"init_std", s.init_std}, {"kernels", names_of(s.kernels)}};

    std::vector<std::vector<std::pair<KernelKind, FitOutcome>>> fits(seeds.size());
    r.per_seed = run_seeds(
        seeds,
        [&](std::uint64_t seed) {
            const std::size_t slot =
                static_cast<std::size_t>(std::find(seeds.begin(), seeds.end(), seed) - seeds.begin());
            const Tensor target = fit_target(s, seed);
            SeedResult res;
            double baseline = 0.0;
            for (double v : target.data()) baseline += v * v;
            res.metrics["mse_zero"] = baseline / static_cast<double>(target.size());
            std::vector<double> mses;
            for (auto kind : s.kernels) {
                FitOutcome fit = fit_matrix(kind, target, s, seed);
                res.metrics["mse_" + lower_name(kind)] = fit.final_mse;
                mses.push_back(fit.final_mse);
                fits[slot].emplace_back(kind, std::move(fit));
            }
            // listed order is expected to improve strictly, e.g. linear > plinear > mixk
            bool ordered = true;
            for (std::size_t i = 1; i < mses.size(); ++i) ordered = ordered && mses[i] < mses[i - 1];
            res.metrics["strict_order"] = ordered ? 1.0 : 0.0;
            return res;
        },
        parallel);

    Table final{{"seed", "kernel", "final_mse"}, {}};
    Table curves{{"seed", "kernel", "step", "mse"}, {}};
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        for (const auto& [kind, fit] : fits[i]) {
            final.rows.push_back({static_cast<double>(seeds[i]), lower_name(kind), fit.final_mse});
            for (const auto& [step, mse] : fit.curve)
                curves.rows.push_back({static_cast<double>(seeds[i]), lower_name(kind), static_cast<double>(step), mse});
        }
    }
    r.tables = {{"final", std::move(final)}, {"curves", std::move(curves)}};
    finish(r, t0);
    return r;
}

// ------------------------------------------------------------------ gradient evolution

std::vector<double> grad_evolution_trace(KernelKind kind, const GradEvolutionSettings& s, std::uint64_t seed) {
    if (!(s.scale > 0.0)) throw std::invalid_argument("factor scale must be positive");
    std::mt19937_64 rng(seed);
    const Tensor target = gaussian({s.m, s.n}, rng);
    LowRankPair pair{uniform({s.n, s.rank}, rng, -s.scale, s.scale), uniform({s.m, s.rank}, rng, -s.scale, s.scale)};
    const KernelSpec spec = KernelSpec::canonical(kind, std::min<std::size_t>(2, s.rank));
    Tensor coeffs = spec.coefficients();
    Adam adam(AdamConfig{.lr = s.lr});

    std::vector<double> trace;
    for (std::int64_t step = 0; step < s.steps; ++step) {
        ad::Tape tape;
        Var A = tape.parameter(pair.A), B = tape.parameter(pair.B), c = tape.parameter(coeffs);
        Var loss = ad::mean(ad::square(merge(spec, A, B, c) - tape.constant(target)));
        if (!std::isfinite(loss.value().item())) {
            throw std::runtime_error(lower_name(kind) + " loss is not finite at step " + std::to_string(step));
        }
        tape.backward(loss);
        Tensor gA = tape.grad(A), gB = tape.grad(B);
        trace.push_back(mean_abs(gA, gB));
        adam.step({&pair.A, &pair.B, &coeffs}, {std::move(gA), std::move(gB), tape.grad(c)});
    }
    return trace;
}

ExperimentReport grad_evolution_experiment(const GradEvolutionSettings& s, const std::vector<std::uint64_t>& seeds,
                                           bool parallel) {
    const auto t0 = Clock::now();
    ExperimentReport r;
    r.name = "grad-evolution";
    r.seeds = seeds;
    r.config = {{"m", s.m},         {"n", s.n},         {"rank", s.rank}, {"scale", s.scale},
                {"steps", s.steps}, {"lr", s.lr},       {"kernels", names_of(s.kernels)}};

    std::vector<std::vector<std::vector<double>>> traces(seeds.size());
    r.per_seed = run_seeds(
        seeds,
        [&](std::uint64_t seed) {
            const std::size_t slot =
                static_cast<std::size_t>(std::find(seeds.begin(), seeds.end(), seed) - seeds.begin());
            SeedResult res;
            for (auto kind : s.kernels) {
                auto trace = grad_evolution_trace(kind, s, seed);
                res.metrics["grad_" + lower_name(kind)] =
                    std::accumulate(trace.begin(), trace.end(), 0.0) / static_cast<double>(trace.size());
                traces[slot].push_back(std::move(trace));
            }
            const auto rbf = res.metrics.find("grad_rbf"), mixk = res.metrics.find("grad_mixk");
            if (rbf != res.metrics.end() && mixk != res.metrics.end() && mixk->second > 0.0)
                res.metrics["ratio_rbf_mixk"] = rbf->second / mixk->second;
            return res;
        },
        parallel);

    Table t{{"seed", "kernel", "step", "mean_abs_grad"}, {}};
    for (std::size_t i = 0; i < seeds.size(); ++i)
        for (std::size_t k = 0; k < traces[i].size(); ++k)
            for (std::size_t step = 0; step < traces[i][k].size(); ++step)
                t.rows.push_back({static_cast<double>(seeds[i]), lower_name(s.kernels[k]), static_cast<double>(step),
                                  traces[i][k][step]});
    r.tables = {{"trace", std::move(t)}};
    finish(r, t0);
    // the ratio of means over seeds, next to the per-seed mean ratio
    if (r.aggregate.count("mean_grad_rbf") && r.aggregate.count("mean_grad_mixk") && r.aggregate["mean_grad_mixk"] > 0)
        r.aggregate["ratio_of_means_rbf_mixk"] = r.aggregate["mean_grad_rbf"] / r.aggregate["mean_grad_mixk"];
    return r;
}

// ------------------------------------------------------------------ rank sweep

ExperimentReport rank_sweep(const RankSweepSettings& s, const std::vector<std::uint64_t>& seeds, bool parallel) {
    const auto t0 = Clock::now();
    ExperimentReport r;
    r.name = "rank-sweep";
    r.seeds = seeds;
    r.config = {{"m", s.m}, {"n", s.n}, {"ranks", s.ranks}, {"kernels", names_of(s.kernels)}};
    for (auto k : s.ranks)
        if (k < 1 || k > std::min(s.m, s.n)) throw std::invalid_argument("rank outside [1, min(m, n)]");

    r.per_seed = run_seeds(
        seeds,
        [&](std::uint64_t seed) {
            SeedResult res;
            for (auto rank : s.ranks) {
                std::mt19937_64 rng(seed * 1000003 + rank);
                const LowRankPair pair{gaussian({s.n, rank}, rng), gaussian({s.m, rank}, rng)};
                for (auto kind : s.kernels) {
                    const KernelSpec spec = KernelSpec::canonical(kind, std::min<std::size_t>(2, rank));
                    res.metrics["rank_" + lower_name(kind) + "_r" + std::to_string(rank)] =
                        static_cast<double>(numerical_rank(merge(spec, pair)));
                }
            }
            return res;
        },
        parallel);

    Table t{{"seed", "kernel", "r", "numerical_rank"}, {}};
    for (const auto& res : r.per_seed)
        for (auto rank : s.ranks)
            for (auto kind : s.kernels) {
                const auto key = "rank_" + lower_name(kind) + "_r" + std::to_string(rank);
                if (res.metrics.count(key))
                    t.rows.push_back({static_cast<double>(res.seed), lower_name(kind), static_cast<double>(rank),
                                      res.metrics.at(key)});
            }
    r.tables = {{"ranks", std::move(t)}};
    finish(r, t0);
    // worst cases over seeds, which the rank claims are about
    for (auto rank : s.ranks)
        for (auto kind : s.kernels) {
            const auto key = "rank_" + lower_name(kind) + "_r" + std::to_string(rank);
            double lo = INFINITY, hi = -INFINITY;
            for (const auto& res : r.per_seed)
                if (res.metrics.count(key)) {
                    lo = std::min(lo, res.metrics.at(key));
                    hi = std::max(hi, res.metrics.at(key));
                }
            if (std::isfinite(lo)) {
                r.aggregate["min_" + key] = lo;
                r.aggregate["max_" + key] = hi;
            }
        }
    return r;
}

// ------------------------------------------------------------------ allocation traces

Table alloc_trace_table(const RunTrace& trace) {
    if (trace.epochs.empty()) throw std::invalid_argument("allocation trace has no epochs");
    Table t{{"epoch", "layer", "budget", "capacity", "sparsity_ratio"}, {}};
    for (const auto& e : trace.epochs)
        for (std::size_t l = 0; l < trace.layer_names.size(); ++l)
            t.rows.push_back({static_cast<double>(e.epoch), trace.layer_names[l], static_cast<double>(e.budgets[l]),
                              static_cast<double>(trace.capacities[l]), e.sparsity[l]});
    return t;
}

Heatmap alloc_heatmap(const RunTrace& trace) {
    if (trace.epochs.empty()) throw std::invalid_argument("allocation trace has no epochs");
    Heatmap h;
    h.row_labels = trace.layer_names;
    h.values.assign(trace.layer_names.size(), {});
    for (const auto& e : trace.epochs) {
        h.column_labels.push_back(std::to_string(e.epoch));
        for (std::size_t l = 0; l < trace.layer_names.size(); ++l) h.values[l].push_back(e.sparsity[l]);
    }
    return h;
}

namespace {

json trainer_echo(const DatasetConfig& data, const TrainerConfig& t) {
    RunConfig c;
    c.data = data;
    c.trainer = t;
    json j = to_json(c);
    j.erase("experiments");
    return j;
}

void sparsity_metrics(const RunTrace& trace, SeedResult& res) {
    const auto& last = trace.epochs.back();
    double mean = 0.0, budget = 0.0, cap = 0.0;
    for (std::size_t l = 0; l < last.sparsity.size(); ++l) {
        mean += last.sparsity[l];
        budget += static_cast<double>(last.budgets[l]);
        cap += static_cast<double>(trace.capacities[l]);
    }
    res.metrics["final_mean_ratio"] = mean / static_cast<double>(last.sparsity.size());
    res.metrics["final_global_ratio"] = 1.0 - budget / cap;
}

}  // namespace

ExperimentReport alloc_trace_experiment(const DatasetConfig& data, const TrainerConfig& trainer,
                                        const std::vector<std::uint64_t>& seeds, bool parallel) {
    const auto t0 = Clock::now();
    ExperimentReport r;
    r.name = "alloc-trace";
    r.seeds = seeds;
    r.config = trainer_echo(data, trainer);

    std::vector<RunTrace> traces(seeds.size());
    r.per_seed = run_seeds(
        seeds,
        [&](std::uint64_t seed) {
            const std::size_t slot =
                static_cast<std::size_t>(std::find(seeds.begin(), seeds.end(), seed) - seeds.begin());
            DatasetConfig dc = data;
            dc.seed += seed;
            TrainerConfig tc = trainer;
            tc.seed += seed;
            const Dataset ds = synth_dataset(dc);
            traces[slot] = fine_tune(tc, ds);
            SeedResult res;
            sparsity_metrics(traces[slot], res);
            res.metrics["final_loss"] = traces[slot].final_loss;
            return res;
        },
        parallel);

    Table all{{"seed", "epoch", "layer", "budget", "capacity", "sparsity_ratio"}, {}};
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (traces[i].epochs.empty()) continue;
        for (auto& row : alloc_trace_table(traces[i]).rows) {
            row.insert(row.begin(), static_cast<double>(seeds[i]));
            all.rows.push_back(std::move(row));
        }
        if (r.files.empty()) r.files.emplace_back("alloc-trace_heatmap.svg", heatmap_svg(alloc_heatmap(traces[i])));
    }
    r.tables = {{"sparsity", std::move(all)}};
    finish(r, t0);
    return r;
}

// ------------------------------------------------------------------ training comparison

ExperimentReport train_experiment(const DatasetConfig& data, const TrainerConfig& trainer, const TrainSettings& s,
                                  const std::vector<std::uint64_t>& seeds, bool parallel) {
    if (s.kernels.empty()) throw std::invalid_argument("train experiment needs at least one kernel");
    const auto t0 = Clock::now();
    ExperimentReport r;
    r.name = "train";
    r.seeds = seeds;
    r.config = trainer_echo(data, trainer);
    r.config["kernels"] = names_of(s.kernels);

    struct Run {
        KernelKind kind;
        RunTrace trace;
        std::vector<unsigned char> checkpoint;
    };
    std::vector<std::vector<Run>> runs(seeds.size());
    r.per_seed = run_seeds(
        seeds,
        [&](std::uint64_t seed) {
            const std::size_t slot =
                static_cast<std::size_t>(std::find(seeds.begin(), seeds.end(), seed) - seeds.begin());
            DatasetConfig dc = data;
            dc.seed += seed;
            const Dataset ds = synth_dataset(dc);
            SeedResult res;
            for (auto kind : s.kernels) {
                TrainerConfig tc = trainer;
                tc.seed += seed;
                tc.kernel = KernelSpec::make(kind, trainer.kernel.pieces);
                TinyModel model;
                RunTrace trace = fine_tune(tc, ds, &model);
                res.metrics["final_loss_" + lower_name(kind)] = trace.final_loss;
                res.metrics["initial_loss_" + lower_name(kind)] = trace.initial_loss;
                res.metrics["base_loss"] = trace.base_loss;
                runs[slot].push_back({kind, std::move(trace), encode_checkpoint(AdapterState::capture(model))});
            }
            const double baseline = runs[slot].front().trace.final_loss;
            for (std::size_t k = 1; k < runs[slot].size(); ++k)
                res.metrics["beats_" + lower_name(s.kernels.front()) + "_" + lower_name(runs[slot][k].kind)] =
                    runs[slot][k].trace.final_loss < baseline ? 1.0 : 0.0;
            return res;
        },
        parallel);

    Table epochs{{"seed", "kernel", "epoch", "train_loss", "eval_loss"}, {}};
    Table sparsity{{"seed", "kernel", "epoch", "layer", "budget", "capacity", "sparsity_ratio"}, {}};
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        for (const auto& run : runs[i]) {
            const double seed = static_cast<double>(seeds[i]);
            for (const auto& e : run.trace.epochs)
                epochs.rows.push_back({seed, lower_name(run.kind), static_cast<double>(e.epoch), e.train_loss, e.eval_loss});
            if (!run.trace.epochs.empty()) {
                for (auto& row : alloc_trace_table(run.trace).rows) {
                    row.insert(row.begin(), lower_name(run.kind));
                    row.insert(row.begin(), seed);
                    sparsity.rows.push_back(std::move(row));
                }
            }
            r.files.emplace_back("train_s" + std::to_string(seeds[i]) + "_" + lower_name(run.kind) + ".snla",
                                 std::string(run.checkpoint.begin(), run.checkpoint.end()));
        }
    }
    r.tables = {{"epochs", std::move(epochs)}, {"sparsity", std::move(sparsity)}};
    finish(r, t0);
    return r;
}

// ------------------------------------------------------------------ schedules

Table schedule_table(const BudgetSchedule& schedule, std::int64_t samples) {
    schedule.validate();
    if (samples < 2) throw std::invalid_argument("need at least two sample points");
    Table t{{"t"}, {}};
    const std::vector<ScheduleKind> kinds{ScheduleKind::Constant, ScheduleKind::Linear, ScheduleKind::Quadratic,
                                          ScheduleKind::Cubic};
    for (auto k : kinds) t.header.emplace_back(schedule_name(k));
    std::int64_t previous = -1;
    for (std::int64_t i = 0; i < samples; ++i) {
        // evenly spaced integer steps, rounded to nearest, duplicates dropped
        const std::int64_t step = (2 * i * schedule.steps + (samples - 1)) / (2 * (samples - 1));
        if (step == previous) continue;
        previous = step;
        std::vector<Cell> row{static_cast<double>(step)};
        for (auto k : kinds) {
            BudgetSchedule s = schedule;
            s.kind = k;
            row.emplace_back(static_cast<double>(budget_at(s, step)));
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

ExperimentReport schedule_experiment(const ScheduleSettings& s) {
    const auto t0 = Clock::now();
    ExperimentReport r;
    r.name = "schedule";
    r.config = {{"initial", s.initial}, {"final", s.final}, {"steps", s.steps}, {"samples", s.samples}};
    const BudgetSchedule base{.initial = s.initial, .final = s.final, .steps = s.steps};
    r.tables = {{"budgets", schedule_table(base, s.samples)}};

    SeedResult res;
    bool ordered = true, monotone = true;
    for (auto kind : {ScheduleKind::Constant, ScheduleKind::Linear, ScheduleKind::Quadratic, ScheduleKind::Cubic}) {
        BudgetSchedule b = base;
        b.kind = kind;
        const std::string name(schedule_name(kind));
        res.metrics["start_" + name] = static_cast<double>(budget_at(b, 0));
        res.metrics["end_" + name] = static_cast<double>(budget_at(b, s.steps));
        if (s.steps % 2 == 0) res.metrics["mid_" + name] = static_cast<double>(budget_at(b, s.steps / 2));
        for (std::int64_t t = 1; t <= s.steps; ++t) monotone = monotone && budget_at(b, t) <= budget_at(b, t - 1);
    }
    for (std::int64_t t = 1; t < s.steps; ++t) {
        BudgetSchedule c = base, q = base, l = base;
        c.kind = ScheduleKind::Cubic;
        q.kind = ScheduleKind::Quadratic;
        l.kind = ScheduleKind::Linear;
        ordered = ordered && budget_at(c, t) <= budget_at(q, t) && budget_at(q, t) <= budget_at(l, t);
    }
    res.metrics["ordered"] = ordered ? 1.0 : 0.0;
    res.metrics["monotone"] = monotone ? 1.0 : 0.0;
    r.per_seed = {res};
    finish(r, t0);
    return r;
}

// ------------------------------------------------------------------ memory model

std::string_view memory_mode_name(MemoryMode mode) {
    switch (mode) {
        case MemoryMode::FullFT: return "full-ft";
        case MemoryMode::LowRank: return "low-rank";
        case MemoryMode::LowRankStoringDelta: return "low-rank-storing-delta";
    }
    return "?";
}

MemoryFootprint memory_footprint_estimate(const std::vector<LayerDims>& layers, std::size_t rank,
                                          const KernelSpec& kernel, MemoryMode mode) {
    MemoryFootprint f;
    std::int64_t base = 0;
    for (const auto& l : layers) {
        if (l.m == 0 || l.n == 0) throw std::invalid_argument("layer dimensions must be positive");
        const auto mn = static_cast<std::int64_t>(l.m * l.n);
        base += mn;
        if (mode == MemoryMode::FullFT) {
            f.optimizer_params += mn;
        } else {
            f.optimizer_params += static_cast<std::int64_t>((l.m + l.n) * rank + kernel.coefficient_count());
        }
    }
    f.optimizer_state = 2 * f.optimizer_params;
    if (mode == MemoryMode::FullFT) {
        f.stored_floats = f.optimizer_params + f.optimizer_state;  // the weights are the optimized floats
    } else {
        f.stored_floats = base + f.optimizer_params + f.optimizer_state;
        if (mode == MemoryMode::LowRankStoringDelta) f.stored_floats += base;
    }
    return f;
}

ExperimentReport memory_model_experiment(const MemorySettings& s) {
    const auto t0 = Clock::now();
    ExperimentReport r;
    r.name = "memory-model";
    r.config = {{"m", s.m}, {"n", s.n}, {"layers", s.layers}, {"rank", s.rank}, {"kernel", lower_name(s.kernel)}};
    const std::vector<LayerDims> dims(s.layers, LayerDims{s.m, s.n});
    const KernelSpec spec = KernelSpec::make(s.kernel, std::max<std::size_t>(1, std::min<std::size_t>(2, s.rank)));

    Table t{{"mode", "optimizer_params", "optimizer_state", "stored_floats"}, {}};
    SeedResult res;
    std::map<MemoryMode, MemoryFootprint> fp;
    for (auto mode : {MemoryMode::FullFT, MemoryMode::LowRank, MemoryMode::LowRankStoringDelta}) {
        fp[mode] = memory_footprint_estimate(dims, s.rank, spec, mode);
        const std::string name(memory_mode_name(mode));
        t.rows.push_back({name, static_cast<double>(fp[mode].optimizer_params),
                          static_cast<double>(fp[mode].optimizer_state), static_cast<double>(fp[mode].stored_floats)});
        res.metrics["optimizer_params_" + name] = static_cast<double>(fp[mode].optimizer_params);
        res.metrics["stored_floats_" + name] = static_cast<double>(fp[mode].stored_floats);
    }
    res.metrics["ratio_lowrank_fullft"] = static_cast<double>(fp[MemoryMode::LowRank].optimizer_params) /
                                          static_cast<double>(fp[MemoryMode::FullFT].optimizer_params);
    res.metrics["delta_storing_minus_lowrank"] = static_cast<double>(fp[MemoryMode::LowRankStoringDelta].stored_floats -
                                                                     fp[MemoryMode::LowRank].stored_floats);
    r.per_seed = {res};
    r.tables = {{"footprint", std::move(t)}};
    finish(r, t0);
    return r;
}

// ------------------------------------------------------------------ gradient fidelity

ExperimentReport grad_check_experiment(const GradCheckSettings& s, std::uint64_t seed) {
    const auto t0 = Clock::now();
    ExperimentReport r;
    r.name = "grad-check";
    r.seeds = {seed};
    r.config = {{"m", s.m}, {"n", s.n}, {"rank", s.rank}, {"instances", s.instances}, {"step", s.step}, {"tol", s.tol}};

    std::mt19937_64 rng(seed);
    const std::size_t pieces = std::min<std::size_t>(2, s.rank);
    auto draw_spec = [&](KernelKind kind) {
        KernelSpec spec = KernelSpec::canonical(kind, pieces);
        Tensor c = uniform({spec.coefficient_count()}, rng, 0.5, 1.5);
        spec.set_coefficients(c);
        return spec;
    };

    Table t{{"variant", "instance", "max_rel_error"}, {}};
    SeedResult res;
    auto record = [&](const std::string& variant, std::size_t i, const ad::GradientReport& rep) {
        t.rows.push_back({variant, static_cast<double>(i), rep.worst()});
        auto& worst = res.metrics["worst_" + variant];
        worst = std::max(worst, rep.worst());
    };

    for (auto kind : all_kernels()) {
        res.metrics["worst_" + lower_name(kind)] = 0.0;
        for (std::size_t i = 0; i < s.instances; ++i) {
            const KernelSpec spec = draw_spec(kind);
            const Tensor W = uniform({s.m, s.n}, rng, -1.0, 1.0);
            std::vector<Tensor> params{uniform({s.n, s.rank}, rng, -1.0, 1.0), uniform({s.m, s.rank}, rng, -1.0, 1.0),
                                       spec.coefficients()};
            auto program = [&](ad::Tape& tape, std::span<const Var> p) {
                return ad::sum(tape.constant(W) * merge(spec, p[0], p[1], p[2]));
            };
            record(lower_name(kind), i, ad::finite_diff_check(program, params, s.step, s.tol));
        }
    }

    for (auto mode : {SparsifyMode::SoftSign, SparsifyMode::LiteralProduct}) {
        const std::string variant = "sparse_" + std::string(sparsify_mode_name(mode));
        res.metrics["worst_" + variant] = 0.0;
        const auto budget = static_cast<std::int64_t>(s.m * s.n / 2);
        for (std::size_t i = 0; i < s.instances; ++i) {
            KernelSpec spec;
            std::vector<Tensor> params;
            double tau = 0.0;
            // redraw until no magnitude sits near the threshold
            for (int attempt = 0;; ++attempt) {
                if (attempt == 1000) throw std::runtime_error("could not draw an instance away from the threshold");
                spec = draw_spec(KernelKind::MixK);
                params = {uniform({s.n, s.rank}, rng, -1.0, 1.0), uniform({s.m, s.rank}, rng, -1.0, 1.0),
                          spec.coefficients()};
                const Tensor dw = merge(spec, LowRankPair{params[0], params[1]});
                // threshold halfway between the b-th and (b+1)-th magnitudes
                const double below = threshold_for_budget(dw, budget), above = threshold_for_budget(dw, budget - 1);
                tau = 0.5 * (below + above);
                const bool clear = above - below > 2e-3;
                if (clear) break;
            }
            const Tensor W = uniform({s.m, s.n}, rng, -1.0, 1.0);
            auto program = [&](ad::Tape& tape, std::span<const Var> p) {
                return ad::sum(tape.constant(W) * sparsify_at(merge(spec, p[0], p[1], p[2]), tau, mode));
            };
            record(variant, i, ad::finite_diff_check(program, params, s.step, s.tol));
        }
    }

    double overall = 0.0;
    for (const auto& [k, v] : res.metrics) overall = std::max(overall, v);
    res.metrics["worst_overall"] = overall;
    r.per_seed = {res};
    r.tables = {{"errors", std::move(t)}};
    finish(r, t0);
    return r;
}

}  // namespace snella
