#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace targeting {

// Absolute slack allowed on the budget constraint.
inline constexpr double kBudgetSlack = 1e-9;

// A feasible allocation: nonnegative entries whose sum does not exceed the
// budget. Construction validates both invariants.
class TransferVector {
public:
    TransferVector(std::vector<double> transfers, double budget);

    const std::vector<double>& values() const noexcept { return transfers_; }
    double budget() const noexcept { return budget_; }
    std::size_t size() const noexcept { return transfers_.size(); }
    double operator[](std::size_t i) const { return transfers_[i]; }

    double spend() const;
    double squared_norm() const;
    // Number of strictly positive entries.
    std::size_t active_count() const;

private:
    std::vector<double> transfers_;
    double budget_;
};

// Bottom-up leveling: households 0..cutoff-1 (in ascending income order) are
// raised to `level`; everyone else receives nothing.
struct LevelingResult {
    TransferVector transfers;
    std::size_t cutoff_index;  // p, the number of households at or below the level
    double level;
};

// Euclidean projection of `gaps` onto {t >= 0, sum t <= budget}.
// Throws Error(invalid_input) on an empty or non-finite gap vector or a
// nonpositive budget.
TransferVector project_to_budget_simplex(std::span<const double> gaps, double budget);

// The unique threshold g >= 0 with sum max(0, v_i - g) = min(budget, sum max(0, v_i)).
// Sort-based and exact up to rounding; returns 0 when the budget is slack.
double solve_budget_multiplier(std::span<const double> values, double budget);

// Bisection on the same equation for callers that cannot afford a sort.
// The returned threshold leaves a residual of at most `residual_tol`.
double solve_budget_multiplier_bisection(std::span<const double> values, double budget,
                                         double residual_tol = 1e-12);

// Sum of max(0, v_i - threshold).
double thresholded_total(std::span<const double> values, double threshold);

// KKT form of the optimum for a given budget shadow price lambda:
// t_i = max(0, gap_i - lambda / 2).
std::vector<double> kkt_transfers(std::span<const double> gaps, double lambda);

// Progressive leveling-up. `incomes` must be sorted ascending; unsorted input
// is rejected so that the cutoff index refers to the caller's ordering.
LevelingResult leveling_up(std::span<const double> incomes, double poverty_line, double budget);

// Sorts a copy, levels it, and maps transfers back to the original order.
// The cutoff index still counts households in ascending income order.
LevelingResult leveling_up_unsorted(std::span<const double> incomes, double poverty_line,
                                    double budget);

}  // namespace targeting
