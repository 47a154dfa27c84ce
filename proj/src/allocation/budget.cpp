#include "snella/allocation/budget.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace snella {

std::string_view schedule_name(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::Constant: return "constant";
        case ScheduleKind::Linear: return "linear";
        case ScheduleKind::Quadratic: return "quadratic";
        case ScheduleKind::Cubic: return "cubic";
    }
    return "?";
}

ScheduleKind parse_schedule(std::string_view name) {
    for (auto k : {ScheduleKind::Constant, ScheduleKind::Linear, ScheduleKind::Quadratic, ScheduleKind::Cubic})
        if (schedule_name(k) == name) return k;
    throw std::invalid_argument("unknown schedule '" + std::string(name) + "'");
}

void BudgetSchedule::validate() const {
    if (steps < 1) throw std::invalid_argument("schedule needs T >= 1");
    if (final < 0 || final > initial) throw std::invalid_argument("schedule needs 0 <= bT <= b0");
}

std::int64_t budget_at(const BudgetSchedule& schedule, std::int64_t t) {
    schedule.validate();
    if (t < 0 || t > schedule.steps) {
        throw std::out_of_range("step " + std::to_string(t) + " outside [0, " + std::to_string(schedule.steps) + "]");
    }
    if (schedule.kind == ScheduleKind::Constant) return schedule.final;
    if (t == 0) return schedule.initial;
    if (t == schedule.steps) return schedule.final;
    const int power = schedule.kind == ScheduleKind::Linear ? 1 : schedule.kind == ScheduleKind::Quadratic ? 2 : 3;
    if (schedule.steps <= 1'000'000) {
        // exact: bT + (T - t)^k (b0 - bT) / T^k, so halves round the documented way
        __int128 num = 1, den = 1;
        for (int i = 0; i < power; ++i) {
            num *= schedule.steps - t;
            den *= schedule.steps;
        }
        const __int128 v = static_cast<__int128>(schedule.final) * den + num * (schedule.initial - schedule.final);
        return static_cast<std::int64_t>((2 * v + den) / (2 * den));
    }
    const double remaining = 1.0 - static_cast<double>(t) / static_cast<double>(schedule.steps);
    const double value = static_cast<double>(schedule.final) +
                         std::pow(remaining, power) * static_cast<double>(schedule.initial - schedule.final);
    return static_cast<std::int64_t>(std::round(value));
}

AllocationResult alloc(std::span<const double> scores, std::span<const std::int64_t> caps, std::int64_t budget) {
    if (scores.size() != caps.size()) throw std::invalid_argument("alloc: scores and caps differ in length");
    if (budget < 0) throw std::invalid_argument("alloc: negative budget");
    for (double p : scores)
        if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("alloc: scores must be finite and >= 0");
    for (auto c : caps)
        if (c < 0) throw std::invalid_argument("alloc: negative layer capacity");

    const std::size_t L = scores.size();
    const std::int64_t capacity = std::accumulate(caps.begin(), caps.end(), std::int64_t{0});

    AllocationResult result;
    result.requested = budget;
    result.clamped = budget > capacity;
    const std::int64_t target = std::min(budget, capacity);
    result.budgets.assign(L, 0);
    auto& b = result.budgets;

    std::vector<double> p(scores.begin(), scores.end());
    for (std::size_t l = 0; l < L; ++l)
        if (caps[l] == 0) p[l] = 0.0;

    std::int64_t remaining = target;
    while (remaining > 0) {
        double psum = 0.0;
        for (double v : p) psum += v;

        std::int64_t given = 0;
        if (psum > 0.0) {
            for (std::size_t l = 0; l < L; ++l) {
                if (p[l] == 0.0) continue;
                const double share = p[l] / psum;
                // The small slack absorbs products such as 0.1 * 80 landing just below an integer.
                auto inc = static_cast<std::int64_t>(std::floor(share * static_cast<double>(remaining) + 1e-9));
                inc = std::min({inc, caps[l] - b[l], remaining - given});
                b[l] += inc;
                given += inc;
                if (b[l] == caps[l]) p[l] = 0.0;
            }
        }
        remaining -= given;
        if (given > 0) continue;

        // No pass progress: hand out the rest by descending score, cycling.
        std::vector<std::size_t> order(L);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t x, std::size_t y) { return scores[x] > scores[y]; });
        while (remaining > 0) {
            std::vector<std::size_t> open;
            for (std::size_t l : order)
                if (b[l] < caps[l]) open.push_back(l);
            const auto count = static_cast<std::int64_t>(open.size());
            if (remaining >= count) {
                std::int64_t rounds = remaining / count;
                for (std::size_t l : open) rounds = std::min(rounds, caps[l] - b[l]);
                for (std::size_t l : open) b[l] += rounds;
                remaining -= rounds * count;
            } else {
                for (std::int64_t k = 0; k < remaining; ++k) b[open[static_cast<std::size_t>(k)]] += 1;
                remaining = 0;
            }
        }
    }
    result.allocated = std::accumulate(b.begin(), b.end(), std::int64_t{0});
    return result;
}

}  // namespace snella
