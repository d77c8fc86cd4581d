#pragma once

// Reference computations used only by tests. Each is written independently of
// the library, favouring obviousness over speed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

// Projection onto {t >= 0, sum t <= B} by enumerating active sets. For each
// subset S the candidate is either the unconstrained gaps on S or the gaps on
// S shifted by a common constant so the budget binds; the closest feasible
// candidate is the projection. Exponential in n, fine for n <= 10.
inline std::vector<double> brute_force_projection(const std::vector<double>& gaps, double budget) {
    const std::size_t n = gaps.size();
    std::vector<double> best(n, 0.0);
    double best_dist = std::numeric_limits<double>::infinity();
    auto consider = [&](const std::vector<double>& cand) {
        double sum = 0.0;
        for (double v : cand) {
            if (v < -1e-12) return;
            sum += v;
        }
        if (sum > budget + 1e-9) return;
        double dist = 0.0;
        for (std::size_t i = 0; i < n; ++i) dist += (cand[i] - gaps[i]) * (cand[i] - gaps[i]);
        if (dist < best_dist) {
            best_dist = dist;
            best = cand;
        }
    };
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
        std::vector<double> free_cand(n, 0.0);
        std::vector<double> bound_cand(n, 0.0);
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (std::size_t{1} << i)) {
                sum += gaps[i];
                ++count;
            }
        }
        const double shift = count > 0 ? (sum - budget) / static_cast<double>(count) : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (std::size_t{1} << i)) {
                free_cand[i] = gaps[i];
                bound_cand[i] = gaps[i] - shift;
            }
        }
        consider(free_cand);
        if (count > 0) consider(bound_cand);
    }
    return best;
}

// Posterior mean by direct summation, no log-sum-exp. Accurate while the
// densities stay well inside double range.
inline double naive_posterior_mean(const std::vector<double>& support,
                                   const std::vector<double>& weights, double y, double sigma) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < support.size(); ++k) {
        const double z = (y - support[k]) / sigma;
        const double d = weights[k] * std::exp(-0.5 * z * z);
        num += d * support[k];
        den += d;
    }
    return num / den;
}

// Tweedie by central differences of the log marginal density.
inline double finite_difference_tweedie(const std::vector<double>& support,
                                        const std::vector<double>& weights, double y,
                                        double sigma) {
    auto log_f = [&](double x) {
        double s = 0.0;
        for (std::size_t k = 0; k < support.size(); ++k) {
            const double z = (x - support[k]) / sigma;
            s += weights[k] * std::exp(-0.5 * z * z);
        }
        return std::log(s);
    };
    const double h = 1e-4 * sigma;
    return y + sigma * sigma * (log_f(y + h) - log_f(y - h)) / (2.0 * h);
}

// Composite Simpson rule on [a, b] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels) {
    if (panels % 2) ++panels;
    const double h = (b - a) / panels;
    double s = f(a) + f(b);
    for (int i = 1; i < panels; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

// E[mu | y] for mu ~ N(alpha, gamma_sq) truncated to [0, inf), y | mu ~ N(mu, 1),
// by quadrature of the unnormalized posterior.
inline double truncnorm_posterior_mean_quadrature(double alpha, double gamma_sq, double y) {
    const double g = std::sqrt(gamma_sq);
    auto kernel = [&](double mu) {
        const double a = (mu - alpha) / g;
        const double b = y - mu;
        return std::exp(-0.5 * a * a - 0.5 * b * b);
    };
    const double hi = std::max({alpha + 12.0 * g, y + 12.0, 12.0});
    const double num = simpson([&](double m) { return m * kernel(m); }, 0.0, hi, 200000);
    const double den = simpson(kernel, 0.0, hi, 200000);
    return num / den;
}

// Central-difference divergence of a vector field at x.
inline double numeric_divergence(const std::function<std::vector<double>(const std::vector<double>&)>& g,
                                 const std::vector<double>& x, double h) {
    double div = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::vector<double> up = x, down = x;
        up[i] += h;
        down[i] -= h;
        div += (g(up)[i] - g(down)[i]) / (2.0 * h);
    }
    return div;
}

}  // namespace oracle
