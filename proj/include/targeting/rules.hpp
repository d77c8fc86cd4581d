#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "targeting/allocation.hpp"
#include "targeting/prior.hpp"

namespace targeting {

struct PolicyContext {
    double poverty_line;  // z
    double budget;        // B

    PolicyContext(double z, double b);
};

enum class RuleKind { full_info, plug_in, james_stein, oracle_bayes, eb_npmle, eb_truncnorm, ubi };

std::string_view rule_name(RuleKind kind);
// Throws Error(invalid_config) for an unknown name.
RuleKind parse_rule_kind(std::string_view name);

struct RuleSpec {
    RuleKind kind = RuleKind::plug_in;
    // James-Stein and truncated-normal EB: the homoskedastic scale. Unset means
    // the caller's pooled scale (the calibrated sigma_c in simulations,
    // sqrt(mean sigma_i^2) otherwise).
    std::optional<double> pooled_sigma;
    NpmleConfig npmle;
};

// Bookkeeping attached to every rule output. Not part of the allocation itself.
struct RuleMetadata {
    double multiplier = 0.0;  // lambda = 2 * gamma, the budget shadow price
    double spend = 0.0;
    std::size_t active_count = 0;
    double shrink_factor = 1.0;
    std::optional<NpmleFit> fitted_prior;
    std::optional<TruncNormParams> truncnorm;
};

struct RuleOutput {
    TransferVector transfers;
    RuleMetadata meta;
};

RuleOutput full_info_rule(std::span<const double> incomes, const PolicyContext& ctx);
RuleOutput plug_in_rule(const NoisyPanel& panel, const PolicyContext& ctx);
RuleOutput james_stein_rule(const NoisyPanel& panel, const PolicyContext& ctx,
                            double pooled_sigma);

// t_i = max(0, z - m_i - lambda/2), lambda the smallest shadow price meeting the budget.
RuleOutput bayes_rule_from_means(std::span<const double> posterior_means,
                                 const PolicyContext& ctx);

RuleOutput oracle_bayes_rule(const NoisyPanel& panel, const DiscretePrior& true_prior,
                             const PolicyContext& ctx);
// Fits the NPMLE on the same panel it allocates.
RuleOutput eb_rule(const NoisyPanel& panel, const PolicyContext& ctx,
                   const NpmleConfig& config = {});
// Rescales the panel by `pooled_sigma` so the unit-noise moment fit applies,
// then maps posterior means back to income units.
RuleOutput eb_truncnorm_rule(const NoisyPanel& panel, const PolicyContext& ctx,
                             double pooled_sigma);
RuleOutput ubi_rule(std::size_t n, const PolicyContext& ctx);

// Everything a rule might consume. Optional members are required only by the
// rules that use them (full_info needs incomes, oracle_bayes needs the prior).
struct RuleInputs {
    const NoisyPanel& panel;
    std::span<const double> true_incomes;
    const DiscretePrior* true_prior = nullptr;
    std::optional<double> default_pooled_sigma;
};

RuleOutput apply_rule(const RuleSpec& spec, const RuleInputs& inputs, const PolicyContext& ctx);

}  // namespace targeting
