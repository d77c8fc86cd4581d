#include "targeting/shrinkage.hpp"

#include <algorithm>
#include <cmath>

#include "targeting/error.hpp"

namespace targeting {

namespace {

void require_sigma(double noise_scale) {
    if (!(noise_scale > 0.0) || !std::isfinite(noise_scale)) {
        throw Error(ErrorCode::invalid_input, "noise scale must be positive and finite");
    }
}

bool budget_binds(const TransferVector& t, double budget) {
    return t.spend() >= budget - kBudgetSlack * std::max(1.0, budget);
}

}  // namespace

double truncate_shrink_factor(double raw) {
    return (raw > 0.0 && raw < 1.0) ? raw : 1.0;
}

ShrinkageOutcome james_stein_shrink(const TransferVector& plug_in, double noise_scale) {
    require_sigma(noise_scale);
    const std::size_t s = plug_in.active_count();
    const double norm2 = plug_in.squared_norm();
    if (norm2 == 0.0) {
        return {plug_in, 1.0, 1.0, s};
    }
    const double raw =
        1.0 - noise_scale * noise_scale * (static_cast<double>(s) - 3.0) / norm2;
    const double factor = truncate_shrink_factor(raw);
    std::vector<double> scaled(plug_in.values());
    if (factor != 1.0) {
        for (double& t : scaled) t *= factor;
    }
    return {TransferVector(std::move(scaled), plug_in.budget()), factor, raw, s};
}

bool shrink_event(const TransferVector& plug_in, double noise_scale) {
    const std::size_t s = plug_in.active_count();
    if (s <= 3) return false;
    const double norm2 = plug_in.squared_norm();
    const double penalty = noise_scale * noise_scale * (static_cast<double>(s) - 3.0);
    return penalty > 0.0 && penalty < norm2;
}

double divergence_g(const TransferVector& plug_in, double budget) {
    const double norm2 = plug_in.squared_norm();
    const std::size_t s = plug_in.active_count();
    if (norm2 == 0.0 || s == 0) {
        throw Error(ErrorCode::invalid_input, "divergence of g is undefined at a zero allocation");
    }
    const double sd = static_cast<double>(s);
    if (!budget_binds(plug_in, budget)) {
        return (sd - 2.0) / norm2;
    }
    return (sd - 3.0) / norm2 + 2.0 * budget * budget / (sd * norm2 * norm2);
}

double stein_risk_difference_sample(const TransferVector& plug_in, double noise_scale,
                                    double budget) {
    require_sigma(noise_scale);
    if (!shrink_event(plug_in, noise_scale)) return 0.0;
    const double sd = static_cast<double>(plug_in.active_count());
    const double norm2 = plug_in.squared_norm();
    const double sigma4 = std::pow(noise_scale, 4);
    return -sigma4 * ((sd - 3.0) * (sd - 3.0) / norm2 +
                      4.0 * budget * budget * (sd - 3.0) / (sd * norm2 * norm2));
}

double residual_corrected_risk_difference_sample(const TransferVector& plug_in,
                                                 double threshold, double noise_scale,
                                                 double budget) {
    const double base = stein_risk_difference_sample(plug_in, noise_scale, budget);
    if (base == 0.0) return 0.0;
    const double sd = static_cast<double>(plug_in.active_count());
    const double norm2 = plug_in.squared_norm();
    return base + 2.0 * noise_scale * noise_scale * (sd - 3.0) * threshold * plug_in.spend() /
                      norm2;
}

}  // namespace targeting
