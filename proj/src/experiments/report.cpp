#include "snella/experiments/report.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <future>
#include <stdexcept>

namespace snella {

using nlohmann::json;

const Table& ExperimentReport::table(const std::string& key) const {
    for (const auto& [k, t] : tables)
        if (k == key) return t;
    throw std::out_of_range(name + " has no table '" + key + "'");
}

double ExperimentReport::metric(const std::string& key) const {
    const auto it = aggregate.find(key);
    if (it == aggregate.end()) throw std::out_of_range(name + " has no metric '" + key + "'");
    return it->second;
}

std::map<std::string, double> aggregate_metrics(const std::vector<SeedResult>& per_seed) {
    std::map<std::string, std::pair<double, int>> sums;
    double ok = 0.0, failed = 0.0;
    for (const auto& s : per_seed) {
        if (s.error) {
            failed += 1.0;
            continue;
        }
        ok += 1.0;
        for (const auto& [k, v] : s.metrics) {
            auto& [total, count] = sums[k];
            total += v;
            ++count;
        }
    }
    std::map<std::string, double> out;
    for (const auto& [k, tc] : sums) out["mean_" + k] = tc.first / tc.second;
    out["seeds_ok"] = ok;
    out["seeds_failed"] = failed;
    return out;
}

std::vector<std::uint64_t> seed_list(std::uint64_t first, std::size_t count) {
    std::vector<std::uint64_t> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = first + i;
    return out;
}

std::vector<SeedResult> run_seeds(const std::vector<std::uint64_t>& seeds,
                                  const std::function<SeedResult(std::uint64_t)>& fn, bool parallel) {
    auto guarded = [&fn](std::uint64_t seed) {
        try {
            SeedResult r = fn(seed);
            r.seed = seed;
            return r;
        } catch (const std::exception& e) {
            SeedResult r;
            r.seed = seed;
            r.error = e.what();
            return r;
        }
    };
    std::vector<SeedResult> out;
    if (!parallel) {
        for (auto s : seeds) out.push_back(guarded(s));
        return out;
    }
    std::vector<std::future<SeedResult>> jobs;
    for (auto s : seeds) jobs.push_back(std::async(std::launch::async, guarded, s));
    for (auto& j : jobs) out.push_back(j.get());
    return out;
}

namespace {

// JSON has no NaN/inf; keep them readable instead of silently turning into null.
json number(double v) {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

json metric_map(const std::map<std::string, double>& m) {
    json out = json::object();
    for (const auto& [k, v] : m) out[k] = number(v);
    return out;
}

}  // namespace

json report_json(const ExperimentReport& r) {
    json seeds = json::array();
    for (const auto& s : r.per_seed) {
        json e = {{"seed", s.seed}, {"metrics", metric_map(s.metrics)}};
        if (s.error) e["error"] = *s.error;
        seeds.push_back(e);
    }
    json tables = json::array();
    for (const auto& [k, t] : r.tables) tables.push_back(r.name + "_" + k + ".csv");
    return {{"experiment", r.name},   {"config", r.config},   {"seeds", r.seeds},
            {"per_seed", seeds},      {"aggregate", metric_map(r.aggregate)},
            {"wall_seconds", r.seconds}, {"tables", tables}};
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
    {
        std::ofstream out(dir / (report.name + ".json"), std::ios::binary);
        if (!out) throw std::runtime_error("cannot write into " + dir.string());
        out << report_json(report).dump(2) << '\n';
    }
    for (const auto& [k, t] : report.tables) write_csv(t, dir / (report.name + "_" + k + ".csv"));
    for (const auto& [name, text] : report.files) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
        out << text;
    }
}

}  // namespace snella
