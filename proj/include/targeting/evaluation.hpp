#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "targeting/allocation.hpp"
#include "targeting/rules.hpp"

namespace targeting {

// A household counts as a recipient when its transfer exceeds this amount.
inline constexpr double kRecipientThreshold = 1e-9;

enum class LossKind { squared, one_sided };

std::string_view loss_name(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

// (1/n) sum (z - y_i - t_i)^2
double squared_gap_loss(std::span<const double> transfers, std::span<const double> incomes,
                        double poverty_line);
// (1/n) sum max(0, z - y_i - t_i)^2
double one_sided_loss(std::span<const double> transfers, std::span<const double> incomes,
                      double poverty_line);
double evaluate_loss(LossKind kind, std::span<const double> transfers,
                     std::span<const double> incomes, double poverty_line);

// (L(t) - L(0)) / (L(t*) - L(0)), t* the full-information optimum.
// Throws Error(undefined_metric) when the denominator is not positive.
double loss_ratio(std::span<const double> transfers, std::span<const double> incomes,
                  double poverty_line, double budget, LossKind kind = LossKind::squared);

struct TargetingStats {
    double inclusion_error = 0.0;  // nonpoor share of recipients
    double exclusion_error = 0.0;  // share of the poor receiving nothing
    double reach = 0.0;            // recipients / n
    double avg_transfer_given_positive = 0.0;
    bool no_recipients = false;    // inclusion error reported as 0
    bool no_poor = false;          // exclusion error reported as 0
};

TargetingStats targeting_errors(std::span<const double> transfers,
                                std::span<const double> incomes, double poverty_line);

struct MetricsReport {
    double loss = 0.0;
    double loss_ratio = 0.0;
    double inclusion_error = 0.0;
    double exclusion_error = 0.0;
    double reach = 0.0;
    double avg_transfer_given_positive = 0.0;
    double spend = 0.0;
    bool no_recipients = false;
};

// Caches the no-transfer and full-information losses for one population so
// many allocations can be scored against the same realized incomes.
class Evaluator {
public:
    Evaluator(std::span<const double> incomes, const PolicyContext& ctx,
              LossKind kind = LossKind::squared);

    MetricsReport report(const TransferVector& transfers) const;
    double loss_ratio(std::span<const double> transfers) const;

    double baseline_loss() const noexcept { return baseline_; }
    double optimal_loss() const noexcept { return optimal_; }
    const TransferVector& optimum() const noexcept { return optimum_; }

private:
    std::vector<double> incomes_;
    PolicyContext ctx_;
    LossKind kind_;
    TransferVector optimum_;
    double baseline_;
    double optimal_;
};

struct RegretEstimate {
    double mean;
    double standard_error;
};

// Mean and Monte-Carlo standard error of paired differences rule - oracle.
RegretEstimate bayes_regret_estimate(std::span<const double> rule_losses,
                                     std::span<const double> oracle_losses);

// Mean and standard error of a single sample.
RegretEstimate mean_with_error(std::span<const double> values);

}  // namespace targeting
