#include "targeting/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "targeting/error.hpp"

namespace targeting {

namespace {

void require_budget(double budget) {
    if (!(budget > 0.0) || !std::isfinite(budget)) {
        throw Error(ErrorCode::invalid_input, "budget must be positive and finite");
    }
}

void require_finite(std::span<const double> values, const char* what) {
    if (values.empty()) {
        throw Error(ErrorCode::invalid_input, std::string(what) + " is empty");
    }
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::invalid_input, std::string(what) + " has a non-finite entry");
        }
    }
}

double positive_total(std::span<const double> values) {
    double total = 0.0;
    for (double v : values) total += std::max(v, 0.0);
    return total;
}

}  // namespace

TransferVector::TransferVector(std::vector<double> transfers, double budget)
    : transfers_(std::move(transfers)), budget_(budget) {
    require_budget(budget_);
    double sum = 0.0;
    for (double t : transfers_) {
        if (!(t >= 0.0) || !std::isfinite(t)) {
            throw Error(ErrorCode::invalid_input, "transfers must be finite and nonnegative");
        }
        sum += t;
    }
    if (sum > budget_ + kBudgetSlack) {
        throw Error(ErrorCode::invalid_input,
                    "transfers sum to " + std::to_string(sum) + ", above the budget " +
                        std::to_string(budget_));
    }
}

double TransferVector::spend() const {
    return std::accumulate(transfers_.begin(), transfers_.end(), 0.0);
}

double TransferVector::squared_norm() const {
    double s = 0.0;
    for (double t : transfers_) s += t * t;
    return s;
}

std::size_t TransferVector::active_count() const {
    return static_cast<std::size_t>(
        std::count_if(transfers_.begin(), transfers_.end(), [](double t) { return t > 0.0; }));
}

double thresholded_total(std::span<const double> values, double threshold) {
    double total = 0.0;
    for (double v : values) total += std::max(0.0, v - threshold);
    return total;
}

double solve_budget_multiplier(std::span<const double> values, double budget) {
    require_budget(budget);
    if (values.empty()) return 0.0;
    if (positive_total(values) <= budget) return 0.0;

    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());

    // Largest rho with u_rho - (sum_{j<=rho} u_j - B) / rho > 0.
    double cumsum = 0.0;
    double threshold = 0.0;
    for (std::size_t j = 0; j < sorted.size(); ++j) {
        cumsum += sorted[j];
        const double candidate = (cumsum - budget) / static_cast<double>(j + 1);
        if (sorted[j] - candidate > 0.0) {
            threshold = candidate;
        } else {
            break;
        }
    }
    return std::max(threshold, 0.0);
}

double solve_budget_multiplier_bisection(std::span<const double> values, double budget,
                                         double residual_tol) {
    require_budget(budget);
    if (values.empty()) return 0.0;
    const double target = std::min(budget, positive_total(values));
    if (thresholded_total(values, 0.0) <= budget) return 0.0;

    double lo = 0.0;
    double hi = *std::max_element(values.begin(), values.end());
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double total = thresholded_total(values, mid);
        if (std::abs(total - target) <= residual_tol) return mid;
        if (total > target) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo <= 0.0) break;
    }
    return 0.5 * (lo + hi);
}

std::vector<double> kkt_transfers(std::span<const double> gaps, double lambda) {
    std::vector<double> out(gaps.size());
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        out[i] = std::max(0.0, gaps[i] - 0.5 * lambda);
    }
    return out;
}

TransferVector project_to_budget_simplex(std::span<const double> gaps, double budget) {
    require_finite(gaps, "gap vector");
    require_budget(budget);
    const double threshold = solve_budget_multiplier(gaps, budget);
    std::vector<double> out(gaps.size());
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        out[i] = std::max(0.0, gaps[i] - threshold);
    }
    // Rounding in the threshold can overshoot the budget by a few ulps.
    double spend = std::accumulate(out.begin(), out.end(), 0.0);
    if (spend > budget) {
        const double scale = budget / spend;
        for (double& t : out) t *= scale;
    }
    return TransferVector(std::move(out), budget);
}

LevelingResult leveling_up(std::span<const double> incomes, double poverty_line, double budget) {
    require_finite(incomes, "income vector");
    require_budget(budget);
    if (!std::isfinite(poverty_line)) {
        throw Error(ErrorCode::invalid_input, "poverty line must be finite");
    }
    if (!std::is_sorted(incomes.begin(), incomes.end())) {
        throw Error(ErrorCode::invalid_input, "leveling_up requires incomes sorted ascending");
    }

    const std::size_t n = incomes.size();
    const auto poor_end = std::lower_bound(incomes.begin(), incomes.end(), poverty_line);
    const auto poor = static_cast<std::size_t>(poor_end - incomes.begin());

    double total_gap = 0.0;
    for (std::size_t i = 0; i < poor; ++i) total_gap += poverty_line - incomes[i];

    std::vector<double> transfers(n, 0.0);
    if (total_gap <= budget) {
        for (std::size_t i = 0; i < poor; ++i) transfers[i] = poverty_line - incomes[i];
        return {TransferVector(std::move(transfers), budget), poor, poverty_line};
    }

    // Budget binds: find the smallest p whose leveling cost up to the next
    // income (capped at the line) covers the budget.
    double prefix = 0.0;
    double level = poverty_line;
    for (std::size_t p = 1; p <= poor; ++p) {
        prefix += incomes[p - 1];
        const double next = (p < n) ? std::min(incomes[p], poverty_line) : poverty_line;
        const double cost = static_cast<double>(p) * next - prefix;
        if (cost >= budget) {
            level = (budget + prefix) / static_cast<double>(p);
            break;
        }
    }
    level = std::min(level, poverty_line);

    const auto cutoff =
        static_cast<std::size_t>(std::upper_bound(incomes.begin(), incomes.end(), level) -
                                 incomes.begin());
    double spend = 0.0;
    for (std::size_t i = 0; i < cutoff; ++i) {
        transfers[i] = std::max(0.0, level - incomes[i]);
        spend += transfers[i];
    }
    if (spend > budget) {
        const double scale = budget / spend;
        for (double& t : transfers) t *= scale;
    }
    return {TransferVector(std::move(transfers), budget), cutoff, level};
}

LevelingResult leveling_up_unsorted(std::span<const double> incomes, double poverty_line,
                                    double budget) {
    std::vector<std::size_t> order(incomes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return incomes[a] < incomes[b]; });
    std::vector<double> sorted(incomes.size());
    for (std::size_t k = 0; k < order.size(); ++k) sorted[k] = incomes[order[k]];

    LevelingResult sorted_result = leveling_up(sorted, poverty_line, budget);
    std::vector<double> mapped(incomes.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        mapped[order[k]] = sorted_result.transfers[k];
    }
    return {TransferVector(std::move(mapped), budget), sorted_result.cutoff_index,
            sorted_result.level};
}

}  // namespace targeting
