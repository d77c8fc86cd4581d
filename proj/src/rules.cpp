#include "targeting/rules.hpp"

#include <cmath>
#include <string>

#include "targeting/error.hpp"
#include "targeting/shrinkage.hpp"

namespace targeting {

namespace {

RuleOutput project_gaps(std::span<const double> gaps, double budget) {
    const double threshold = solve_budget_multiplier(gaps, budget);
    TransferVector t = project_to_budget_simplex(gaps, budget);
    RuleMetadata meta;
    meta.multiplier = 2.0 * threshold;
    meta.spend = t.spend();
    meta.active_count = t.active_count();
    return {std::move(t), std::move(meta)};
}

std::vector<double> gaps_from(std::span<const double> values, double poverty_line) {
    std::vector<double> gaps(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) gaps[i] = poverty_line - values[i];
    return gaps;
}

double resolve_sigma(const RuleSpec& spec, const RuleInputs& inputs) {
    if (spec.pooled_sigma) return *spec.pooled_sigma;
    if (inputs.default_pooled_sigma) return *inputs.default_pooled_sigma;
    return inputs.panel.pooled_sigma();
}

}  // namespace

PolicyContext::PolicyContext(double z, double b) : poverty_line(z), budget(b) {
    if (!std::isfinite(z)) throw Error(ErrorCode::invalid_input, "poverty line must be finite");
    if (!(b > 0.0) || !std::isfinite(b)) {
        throw Error(ErrorCode::invalid_input, "budget must be positive and finite");
    }
}

std::string_view rule_name(RuleKind kind) {
    switch (kind) {
        case RuleKind::full_info: return "full_info";
        case RuleKind::plug_in: return "plug_in";
        case RuleKind::james_stein: return "james_stein";
        case RuleKind::oracle_bayes: return "oracle_bayes";
        case RuleKind::eb_npmle: return "eb_npmle";
        case RuleKind::eb_truncnorm: return "eb_truncnorm";
        case RuleKind::ubi: return "ubi";
    }
    return "unknown";
}

RuleKind parse_rule_kind(std::string_view name) {
    for (RuleKind k : {RuleKind::full_info, RuleKind::plug_in, RuleKind::james_stein,
                       RuleKind::oracle_bayes, RuleKind::eb_npmle, RuleKind::eb_truncnorm,
                       RuleKind::ubi}) {
        if (rule_name(k) == name) return k;
    }
    throw Error(ErrorCode::invalid_config, "unknown rule '" + std::string(name) + "'");
}

RuleOutput full_info_rule(std::span<const double> incomes, const PolicyContext& ctx) {
    return project_gaps(gaps_from(incomes, ctx.poverty_line), ctx.budget);
}

RuleOutput plug_in_rule(const NoisyPanel& panel, const PolicyContext& ctx) {
    return project_gaps(gaps_from(panel.estimates(), ctx.poverty_line), ctx.budget);
}

RuleOutput james_stein_rule(const NoisyPanel& panel, const PolicyContext& ctx,
                            double pooled_sigma) {
    RuleOutput plug = plug_in_rule(panel, ctx);
    ShrinkageOutcome shrunk = james_stein_shrink(plug.transfers, pooled_sigma);
    RuleMetadata meta = plug.meta;
    meta.shrink_factor = shrunk.factor;
    meta.spend = shrunk.transfers.spend();
    return {std::move(shrunk.transfers), std::move(meta)};
}

RuleOutput bayes_rule_from_means(std::span<const double> posterior_means,
                                 const PolicyContext& ctx) {
    return project_gaps(gaps_from(posterior_means, ctx.poverty_line), ctx.budget);
}

RuleOutput oracle_bayes_rule(const NoisyPanel& panel, const DiscretePrior& true_prior,
                             const PolicyContext& ctx) {
    return bayes_rule_from_means(posterior_means(true_prior, panel), ctx);
}

RuleOutput eb_rule(const NoisyPanel& panel, const PolicyContext& ctx, const NpmleConfig& config) {
    NpmleFit fit = fit_npmle(panel, config);
    RuleOutput out = bayes_rule_from_means(posterior_means(fit.prior, panel), ctx);
    out.meta.fitted_prior = std::move(fit);
    return out;
}

RuleOutput eb_truncnorm_rule(const NoisyPanel& panel, const PolicyContext& ctx,
                             double pooled_sigma) {
    if (!(pooled_sigma > 0.0) || !std::isfinite(pooled_sigma)) {
        throw Error(ErrorCode::invalid_input, "pooled sigma must be positive");
    }
    std::vector<double> scaled(panel.estimates());
    for (double& v : scaled) v /= pooled_sigma;
    const NoisyPanel unit(scaled, std::vector<double>(scaled.size(), 1.0));
    const TruncNormParams params = fit_truncated_normal(unit);
    std::vector<double> means(scaled.size());
    for (std::size_t i = 0; i < scaled.size(); ++i) {
        means[i] = pooled_sigma * truncated_normal_posterior_mean(params, scaled[i]);
    }
    RuleOutput out = bayes_rule_from_means(means, ctx);
    out.meta.truncnorm = params;
    return out;
}

RuleOutput ubi_rule(std::size_t n, const PolicyContext& ctx) {
    if (n == 0) throw Error(ErrorCode::invalid_input, "UBI needs at least one household");
    TransferVector t(std::vector<double>(n, ctx.budget / static_cast<double>(n)), ctx.budget);
    RuleMetadata meta;
    meta.spend = t.spend();
    meta.active_count = n;
    return {std::move(t), std::move(meta)};
}

RuleOutput apply_rule(const RuleSpec& spec, const RuleInputs& inputs, const PolicyContext& ctx) {
    switch (spec.kind) {
        case RuleKind::full_info:
            if (inputs.true_incomes.size() != inputs.panel.size()) {
                throw Error(ErrorCode::invalid_input, "full_info needs true incomes");
            }
            return full_info_rule(inputs.true_incomes, ctx);
        case RuleKind::plug_in:
            return plug_in_rule(inputs.panel, ctx);
        case RuleKind::james_stein:
            return james_stein_rule(inputs.panel, ctx, resolve_sigma(spec, inputs));
        case RuleKind::oracle_bayes:
            if (inputs.true_prior == nullptr) {
                throw Error(ErrorCode::invalid_input, "oracle_bayes needs the true prior");
            }
            return oracle_bayes_rule(inputs.panel, *inputs.true_prior, ctx);
        case RuleKind::eb_npmle:
            return eb_rule(inputs.panel, ctx, spec.npmle);
        case RuleKind::eb_truncnorm:
            return eb_truncnorm_rule(inputs.panel, ctx, resolve_sigma(spec, inputs));
        case RuleKind::ubi:
            return ubi_rule(inputs.panel.size(), ctx);
    }
    throw Error(ErrorCode::invalid_config, "unhandled rule kind");
}

}  // namespace targeting
