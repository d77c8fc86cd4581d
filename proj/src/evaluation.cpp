#include "targeting/evaluation.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "targeting/error.hpp"

namespace targeting {

namespace {

void require_same_length(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::invalid_input, "transfer and income vectors differ in length");
    }
    if (a.empty()) throw Error(ErrorCode::invalid_input, "empty income vector");
}

}  // namespace

std::string_view loss_name(LossKind kind) {
    return kind == LossKind::squared ? "squared" : "one-sided";
}

LossKind parse_loss_kind(std::string_view name) {
    if (name == "squared") return LossKind::squared;
    if (name == "one-sided" || name == "one_sided") return LossKind::one_sided;
    throw Error(ErrorCode::invalid_config, "unknown loss '" + std::string(name) + "'");
}

double squared_gap_loss(std::span<const double> transfers, std::span<const double> incomes,
                        double poverty_line) {
    require_same_length(transfers, incomes);
    double total = 0.0;
    for (std::size_t i = 0; i < incomes.size(); ++i) {
        const double r = poverty_line - incomes[i] - transfers[i];
        total += r * r;
    }
    return total / static_cast<double>(incomes.size());
}

double one_sided_loss(std::span<const double> transfers, std::span<const double> incomes,
                      double poverty_line) {
    require_same_length(transfers, incomes);
    double total = 0.0;
    for (std::size_t i = 0; i < incomes.size(); ++i) {
        const double r = std::max(0.0, poverty_line - incomes[i] - transfers[i]);
        total += r * r;
    }
    return total / static_cast<double>(incomes.size());
}

double evaluate_loss(LossKind kind, std::span<const double> transfers,
                     std::span<const double> incomes, double poverty_line) {
    return kind == LossKind::squared ? squared_gap_loss(transfers, incomes, poverty_line)
                                     : one_sided_loss(transfers, incomes, poverty_line);
}

double loss_ratio(std::span<const double> transfers, std::span<const double> incomes,
                  double poverty_line, double budget, LossKind kind) {
    return Evaluator(incomes, PolicyContext(poverty_line, budget), kind).loss_ratio(transfers);
}

TargetingStats targeting_errors(std::span<const double> transfers,
                                std::span<const double> incomes, double poverty_line) {
    require_same_length(transfers, incomes);
    std::size_t recipients = 0;
    std::size_t nonpoor_recipients = 0;
    std::size_t poor = 0;
    std::size_t excluded_poor = 0;
    double received = 0.0;
    for (std::size_t i = 0; i < incomes.size(); ++i) {
        const bool gets = transfers[i] > kRecipientThreshold;
        const bool is_poor = incomes[i] < poverty_line;
        if (gets) {
            ++recipients;
            received += transfers[i];
            if (!is_poor) ++nonpoor_recipients;
        }
        if (is_poor) {
            ++poor;
            if (!gets) ++excluded_poor;
        }
    }
    TargetingStats s;
    s.no_recipients = recipients == 0;
    s.no_poor = poor == 0;
    if (recipients > 0) {
        s.inclusion_error = static_cast<double>(nonpoor_recipients) / static_cast<double>(recipients);
        s.avg_transfer_given_positive = received / static_cast<double>(recipients);
    }
    if (poor > 0) {
        s.exclusion_error = static_cast<double>(excluded_poor) / static_cast<double>(poor);
    }
    s.reach = static_cast<double>(recipients) / static_cast<double>(incomes.size());
    return s;
}

Evaluator::Evaluator(std::span<const double> incomes, const PolicyContext& ctx, LossKind kind)
    : incomes_(incomes.begin(), incomes.end()),
      ctx_(ctx),
      kind_(kind),
      optimum_(full_info_rule(incomes, ctx).transfers),
      baseline_(0.0),
      optimal_(0.0) {
    const std::vector<double> zero(incomes_.size(), 0.0);
    baseline_ = evaluate_loss(kind_, zero, incomes_, ctx_.poverty_line);
    optimal_ = evaluate_loss(kind_, optimum_.values(), incomes_, ctx_.poverty_line);
}

double Evaluator::loss_ratio(std::span<const double> transfers) const {
    const double denom = optimal_ - baseline_;
    if (!(denom < 0.0)) {
        throw Error(ErrorCode::undefined_metric,
                    "loss ratio undefined: the full-information optimum does not reduce the loss");
    }
    const double loss = evaluate_loss(kind_, transfers, incomes_, ctx_.poverty_line);
    return (loss - baseline_) / denom;
}

MetricsReport Evaluator::report(const TransferVector& transfers) const {
    const TargetingStats stats = targeting_errors(transfers.values(), incomes_, ctx_.poverty_line);
    MetricsReport r;
    r.loss = evaluate_loss(kind_, transfers.values(), incomes_, ctx_.poverty_line);
    r.loss_ratio = loss_ratio(transfers.values());
    r.inclusion_error = stats.inclusion_error;
    r.exclusion_error = stats.exclusion_error;
    r.reach = stats.reach;
    r.avg_transfer_given_positive = stats.avg_transfer_given_positive;
    r.spend = transfers.spend();
    r.no_recipients = stats.no_recipients;
    return r;
}

RegretEstimate mean_with_error(std::span<const double> values) {
    if (values.empty()) throw Error(ErrorCode::invalid_input, "empty sample");
    const double m = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= m;
    if (values.size() < 2) return {mean, std::numeric_limits<double>::infinity()};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (m - 1.0) / m)};
}

RegretEstimate bayes_regret_estimate(std::span<const double> rule_losses,
                                     std::span<const double> oracle_losses) {
    if (rule_losses.size() != oracle_losses.size() || rule_losses.empty()) {
        throw Error(ErrorCode::invalid_input,
                    "regret needs paired, nonempty loss sequences of equal length");
    }
    std::vector<double> diff(rule_losses.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = rule_losses[i] - oracle_losses[i];
    return mean_with_error(diff);
}

}  // namespace targeting
