#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "snella/experiments/studies.hpp"

namespace snella {

/// Runs one named experiment with the settings and seeds of `config`.
ExperimentReport run_experiment(const std::string& name, const RunConfig& config);

struct AssertionResult {
    Assertion assertion;
    double actual = 0.0;
    bool passed = false;
    std::string message;
};

AssertionResult check_assertion(const Assertion& a, const std::vector<ExperimentReport>& reports);

struct RunAllResult {
    std::vector<ExperimentReport> reports;
    std::vector<AssertionResult> assertions;

    bool passed() const;
};

/// Runs every experiment listed in config.experiments.run, writing each report into `out`,
/// then evaluates the embedded assertions (summary in <out>/assertions.json).
/// Throws std::runtime_error when `out` cannot be created or written.
RunAllResult run_all(const RunConfig& config, const std::filesystem::path& out, std::ostream* log = nullptr);

}  // namespace snella
