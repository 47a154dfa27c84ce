#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace snella {

enum class ScheduleKind { Constant, Linear, Quadratic, Cubic };

std::string_view schedule_name(ScheduleKind kind);
ScheduleKind parse_schedule(std::string_view name);

/// Global tunable-weight budget decayed from b0 to bT over T steps:
///   b_t = round(bT + (1 - t/T)^k (b0 - bT)),  k = 1, 2, 3 for Linear, Quadratic, Cubic.
/// Constant holds bT throughout.
struct BudgetSchedule {
    std::int64_t initial = 0;  // b0
    std::int64_t final = 0;    // bT
    std::int64_t steps = 1;    // T
    ScheduleKind kind = ScheduleKind::Cubic;

    void validate() const;
};

/// Budget at step t in [0, T]; rounding is half away from zero.
std::int64_t budget_at(const BudgetSchedule& schedule, std::int64_t t);

struct AllocationResult {
    std::vector<std::int64_t> budgets;  // per layer
    std::int64_t requested = 0;         // global budget as passed in
    std::int64_t allocated = 0;         // sum of budgets
    bool clamped = false;               // requested exceeded the total capacity
};

/// Proportional budget split with caps: each pass hands every unsaturated layer
/// floor(p_l / sum(p) * remaining) more weights, capped at its size; a layer that reaches its
/// cap drops out of later passes. When a pass makes no progress while budget remains, the
/// remainder goes out one weight at a time to unsaturated layers by descending score
/// (ties to the lower index), cycling until spent.
///
/// Throws std::invalid_argument for a negative budget, negative scores/caps, or a size
/// mismatch. A budget above sum(caps) is clamped and flagged in the result.
AllocationResult alloc(std::span<const double> scores, std::span<const std::int64_t> caps, std::int64_t budget);

}  // namespace snella
