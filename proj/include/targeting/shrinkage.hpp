#pragma once

#include <cstddef>

#include "targeting/allocation.hpp"

namespace targeting {

struct ShrinkageOutcome {
    TransferVector transfers;
    double factor;         // applied factor, in (0, 1]
    double raw_factor;     // 1 - sigma^2 (s - 3) / ||t||^2 before truncation
    std::size_t active_count;
};

// Truncation used by the constrained James-Stein rule: x if 0 < x < 1, else 1.
double truncate_shrink_factor(double raw);

// Rescales the plug-in allocation by the truncated James-Stein factor.
// A zero allocation is returned unchanged with factor 1.
ShrinkageOutcome james_stein_shrink(const TransferVector& plug_in, double noise_scale);

// Stein diagnostics. These are not allocation rules; they exist so the test
// suite can check the dominance argument term by term.

// Divergence of g(X) = t(X) / ||t(X)||^2 at a point whose plug-in allocation
// is `plug_in`. Where the budget binds this is
//   (s - 3) / ||t||^2 + 2 B^2 / (s ||t||^4);
// where it is slack the projection is the identity on the active set and the
// divergence is (s - 2) / ||t||^2.
double divergence_g(const TransferVector& plug_in, double budget);

// Single-draw Stein estimate of R(JS) - R(plug-in): on the shrink event
// {s > 3, 0 < sigma^2 (s - 3) < ||t||^2} returns
//   -sigma^4 [ (s - 3)^2 / ||t||^2 + 4 B^2 (s - 3) / (s ||t||^4) ],
// else 0.
double stein_risk_difference_sample(const TransferVector& plug_in, double noise_scale,
                                    double budget);

// Same statistic with the projection-residual term restored. The residual
// X - t(X) is orthogonal to the active face but not to t(X) itself:
// (X - t)' t = threshold * B when the budget binds, which adds
//   +2 sigma^2 (s - 3) threshold B / ||t||^2
// on the shrink event. `threshold` is the plug-in multiplier gamma.
double residual_corrected_risk_difference_sample(const TransferVector& plug_in,
                                                 double threshold, double noise_scale,
                                                 double budget);

// True when the shrink event holds for this allocation.
bool shrink_event(const TransferVector& plug_in, double noise_scale);

}  // namespace targeting
