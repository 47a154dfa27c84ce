#include "snella/experiments/run_all.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace snella {

using nlohmann::json;

ExperimentReport run_experiment(const std::string& name, const RunConfig& c) {
    const auto& e = c.experiments;
    auto seeds = [&](std::size_t own) { return seed_list(e.seed, own ? own : e.seeds); };
    if (name == "fit-matrix") return fit_matrix_experiment(e.fit_matrix, seeds(e.fit_matrix.seeds), e.parallel);
    if (name == "grad-evolution")
        return grad_evolution_experiment(e.grad_evolution, seeds(e.grad_evolution.seeds), e.parallel);
    if (name == "rank-sweep") return rank_sweep(e.rank_sweep, seeds(e.rank_sweep.seeds), e.parallel);
    if (name == "train") return train_experiment(c.data, c.trainer, e.train, seeds(e.train.seeds), e.parallel);
    if (name == "alloc-trace") return alloc_trace_experiment(c.data, c.trainer, seeds(0), e.parallel);
    if (name == "schedule") return schedule_experiment(e.schedule);
    if (name == "memory-model") return memory_model_experiment(e.memory_model);
    if (name == "grad-check") return grad_check_experiment(e.grad_check, e.seed);
    throw std::invalid_argument("unknown experiment '" + name + "'");
}

AssertionResult check_assertion(const Assertion& a, const std::vector<ExperimentReport>& reports) {
    AssertionResult res{a, NAN, false, ""};
    const ExperimentReport* report = nullptr;
    for (const auto& r : reports)
        if (r.name == a.experiment) report = &r;
    if (!report) {
        res.message = "experiment " + a.experiment + " did not run";
        return res;
    }
    const auto it = report->aggregate.find(a.metric);
    if (it == report->aggregate.end()) {
        res.message = a.experiment + " has no metric " + a.metric;
        return res;
    }
    const double x = res.actual = it->second;
    if (a.op == "<") res.passed = x < a.value;
    else if (a.op == "<=") res.passed = x <= a.value;
    else if (a.op == ">") res.passed = x > a.value;
    else if (a.op == ">=") res.passed = x >= a.value;
    else if (a.op == "==") res.passed = x == a.value;
    else if (a.op == "~=") res.passed = std::abs(x - a.value) <= a.tol;
    else res.message = "unknown comparison " + a.op;
    return res;
}

bool RunAllResult::passed() const {
    for (const auto& a : assertions)
        if (!a.passed) return false;
    return true;
}

RunAllResult run_all(const RunConfig& config, const std::filesystem::path& out, std::ostream* log) {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec || !std::filesystem::is_directory(out)) throw std::runtime_error("cannot create output directory " + out.string());
    {
        const auto probe = out / ".write-test";
        std::ofstream test(probe);
        if (!test) throw std::runtime_error("output directory " + out.string() + " is not writable");
        test.close();
        std::filesystem::remove(probe, ec);
    }

    RunAllResult result;
    for (const auto& name : config.experiments.run) {
        if (log) *log << "running " << name << "..." << std::flush;
        ExperimentReport r = run_experiment(name, config);
        write_report(r, out);
        if (log) {
            *log << " " << r.seconds << " s";
            if (r.aggregate.count("seeds_failed") && r.aggregate.at("seeds_failed") > 0)
                *log << " (" << r.aggregate.at("seeds_failed") << " seed(s) failed)";
            *log << '\n';
        }
        result.reports.push_back(std::move(r));
    }
    for (const auto& a : config.experiments.assertions) result.assertions.push_back(check_assertion(a, result.reports));

    if (!result.assertions.empty()) {
        json summary = json::array();
        for (const auto& a : result.assertions) {
            json j = {{"experiment", a.assertion.experiment}, {"metric", a.assertion.metric}, {"op", a.assertion.op},
                      {"value", a.assertion.value}, {"tol", a.assertion.tol}, {"passed", a.passed}};
            j["actual"] = std::isfinite(a.actual) ? json(a.actual) : json(nullptr);
            if (!a.message.empty()) j["message"] = a.message;
            summary.push_back(j);
        }
        std::ofstream(out / "assertions.json", std::ios::binary) << summary.dump(2) << '\n';
        if (log)
            for (const auto& a : result.assertions)
                *log << (a.passed ? "PASS " : "FAIL ") << a.assertion.experiment << " " << a.assertion.metric << " "
                     << a.assertion.op << " " << a.assertion.value << " (actual " << a.actual << ")"
                     << (a.message.empty() ? "" : " " + a.message) << '\n';
    }
    return result;
}

}  // namespace snella
