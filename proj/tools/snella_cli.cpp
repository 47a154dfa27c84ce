#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "snella/experiments/run_all.hpp"

using namespace snella;

namespace {

struct Common {
    std::string config, out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> seeds, rank, pieces;
    std::optional<std::string> kernel, schedule, period, mode;
    std::optional<double> budget_ratio;
    bool sequential = false;

    // experiment knobs, so larger runs need no config file
    std::optional<std::int64_t> steps, epochs;
    std::optional<double> lr, density, scale;
    std::optional<std::size_t> target_rank;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--out", c.out, "output directory")->capture_default_str();
    app->add_option("--seed", c.seed, "first seed");
    app->add_option("--seeds", c.seeds, "number of seeds");
    app->add_option("--kernel", c.kernel, "linear|plinear|sigmoid|rbf|rbf-normalized|mixk");
    app->add_option("--rank", c.rank, "factor rank r");
    app->add_option("--pieces", c.pieces, "piece count P");
    app->add_option("--budget-ratio", c.budget_ratio, "b_T / b_0");
    app->add_option("--schedule", c.schedule, "constant|linear|quadratic|cubic");
    app->add_option("--alloc-period", c.period, "per-epoch|per-step");
    app->add_option("--sparsify-mode", c.mode, "soft|literal|hard");
    app->add_flag("--sequential", c.sequential, "run seeds one after another");
}

// Flags override the config file; the result is re-validated through the config parser.
RunConfig effective_config(const Common& c, const std::string& experiment) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
    auto& e = cfg.experiments;
    auto& t = cfg.trainer;
    if (c.seed) e.seed = *c.seed;
    if (c.seeds) {
        e.seeds = *c.seeds;
        e.fit_matrix.seeds = e.grad_evolution.seeds = e.rank_sweep.seeds = e.train.seeds = 0;
    }
    if (c.sequential) e.parallel = false;
    if (c.kernel) {
        const KernelKind k = parse_kernel(*c.kernel);
        t.kernel = KernelSpec::make(k, t.kernel.pieces);
        if (experiment == "fit-matrix") e.fit_matrix.kernels = {k};
        if (experiment == "grad-evolution") e.grad_evolution.kernels = {k};
        if (experiment == "rank-sweep") e.rank_sweep.kernels = {k};
        if (experiment == "train") e.train.kernels = {k};
        e.memory_model.kernel = k;
    }
    if (c.rank) {
        // run-all applies it everywhere; a single experiment only touches its own settings
        const bool all = experiment == "run-all";
        t.rank = *c.rank;
        if (all || experiment == "fit-matrix") e.fit_matrix.rank = *c.rank;
        if (all || experiment == "grad-evolution") e.grad_evolution.rank = *c.rank;
        if (all || experiment == "memory-model") e.memory_model.rank = *c.rank;
        if (all || experiment == "grad-check") e.grad_check.rank = *c.rank;
        if (all || experiment == "rank-sweep") e.rank_sweep.ranks = {*c.rank};
    }
    if (c.pieces) {
        t.kernel = KernelSpec::make(t.kernel.kind, *c.pieces);
        e.fit_matrix.pieces = *c.pieces;
    }
    if (c.budget_ratio) t.budget_ratio = *c.budget_ratio;
    if (c.schedule) t.schedule = parse_schedule(*c.schedule);
    if (c.period) t.period = parse_period(*c.period);
    if (c.mode) t.mode = parse_sparsify_mode(*c.mode);
    if (c.steps) {
        e.fit_matrix.steps = e.grad_evolution.steps = *c.steps;
        e.schedule.steps = *c.steps;
    }
    if (c.epochs) t.epochs = *c.epochs;
    if (c.lr) {
        if (experiment == "fit-matrix") e.fit_matrix.lr = *c.lr;
        else if (experiment == "grad-evolution") e.grad_evolution.lr = *c.lr;
        else t.adam.lr = *c.lr;
    }
    if (c.density) e.fit_matrix.density = *c.density;
    if (c.target_rank) e.fit_matrix.target_rank = *c.target_rank;
    if (c.scale) e.grad_evolution.scale = *c.scale;
    if (experiment != "run-all") e.run = {experiment};
    return parse_config(to_json(cfg));
}

void print_summary(const ExperimentReport& r, const std::filesystem::path& out) {
    std::cout << r.name << " (" << std::fixed << std::setprecision(2) << r.seconds << " s)\n";
    std::cout << std::defaultfloat << std::setprecision(8);
    for (const auto& [k, v] : r.aggregate) std::cout << "  " << k << " = " << v << '\n';
    for (const auto& s : r.per_seed)
        if (s.error) std::cout << "  seed " << s.seed << " failed: " << *s.error << '\n';
    std::cout << "  report: " << (out / (r.name + ".json")).string() << '\n';
}

int run_single(const Common& c, const std::string& name) {
    const RunConfig cfg = effective_config(c, name);
    const ExperimentReport r = run_experiment(name, cfg);
    write_report(r, c.out);
    save_config(cfg, std::filesystem::path(c.out) / (name + "_config.json"));
    print_summary(r, c.out);
    return r.aggregate.count("seeds_failed") && r.aggregate.at("seeds_failed") > 0 ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kernelized low-rank adapters with bi-level sparsity allocation: desk-scale studies"};
    app.require_subcommand(1);

    Common common;
    int status = 0;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"fit-matrix", "fit random targets with each kernel merge"},
        {"grad-evolution", "gradient magnitude while fitting at a large factor scale"},
        {"rank-sweep", "numerical rank of merged matrices"},
        {"train", "fine-tune the toy model with each kernel on paired seeds"},
        {"alloc-trace", "per-layer sparsity ratios over training"},
        {"schedule", "budget schedules b_t"},
        {"memory-model", "analytic parameter and optimizer-state counts"},
        {"grad-check", "recorded gradients against finite differences"},
        {"run-all", "every experiment listed in the config, with its assertions"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        add_common(sub, common);
        if (name == "fit-matrix" || name == "grad-evolution" || name == "schedule")
            sub->add_option("--steps", common.steps, "optimization steps (schedule: horizon T)");
        if (name == "fit-matrix" || name == "grad-evolution" || name == "train" || name == "alloc-trace")
            sub->add_option("--lr", common.lr, "Adam learning rate");
        if (name == "fit-matrix") {
            sub->add_option("--density", common.density, "fraction of nonzero target entries");
            sub->add_option("--target-rank", common.target_rank, "rank of the target (0: unrestricted)");
        }
        if (name == "grad-evolution") sub->add_option("--scale", common.scale, "factor magnitude c");
        if (name == "train" || name == "alloc-trace") sub->add_option("--epochs", common.epochs, "training epochs");

        sub->callback([&, name = name] {
            if (name != "run-all") {
                status = run_single(common, name);
                return;
            }
            const RunConfig cfg = effective_config(common, name);
            const RunAllResult res = run_all(cfg, common.out, &std::cout);
            save_config(cfg, std::filesystem::path(common.out) / "run-all_config.json");
            status = res.passed() ? 0 : 1;
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
    return status;
}
