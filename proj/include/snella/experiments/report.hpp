#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "snella/io/csv.hpp"

namespace snella {

struct SeedResult {
    std::uint64_t seed = 0;
    std::map<std::string, double> metrics;
    std::optional<std::string> error;  // set when the seed failed; metrics may be partial
};

struct ExperimentReport {
    std::string name;
    nlohmann::json config;
    std::vector<std::uint64_t> seeds;
    std::vector<SeedResult> per_seed;
    std::map<std::string, double> aggregate;
    double seconds = 0.0;

    std::vector<std::pair<std::string, Table>> tables;       // written as <name>_<key>.csv
    std::vector<std::pair<std::string, std::string>> files;  // extra artefacts, by file name

    const Table& table(const std::string& key) const;
    double metric(const std::string& key) const;  // aggregate lookup, throws std::out_of_range
};

/// mean_<k> over seeds that report k without error, plus seeds_ok / seeds_failed.
std::map<std::string, double> aggregate_metrics(const std::vector<SeedResult>& per_seed);

std::vector<std::uint64_t> seed_list(std::uint64_t first, std::size_t count);

/// Runs `fn` once per seed, concurrently when `parallel`. Results come back in seed order
/// and an exception thrown by one seed is recorded on that seed only.
std::vector<SeedResult> run_seeds(const std::vector<std::uint64_t>& seeds,
                                  const std::function<SeedResult(std::uint64_t)>& fn, bool parallel);

nlohmann::json report_json(const ExperimentReport& report);

/// Writes <dir>/<name>.json, one CSV per table and every extra file.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

}  // namespace snella
