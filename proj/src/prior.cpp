#include "targeting/prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "targeting/error.hpp"

namespace targeting {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))

double log_normal_density(double y, double mu, double sigma) {
    const double r = (y - mu) / sigma;
    return -0.5 * r * r - kLogSqrt2Pi - std::log(sigma);
}

double sum_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

// Responsibilities r_k = w_k phi_k / max_j(w_j phi_j); returns the shift, or
// -inf when every component underflows.
double shifted_components(const DiscretePrior& prior, double y_hat, double sigma,
                          std::vector<double>& r) {
    const auto& support = prior.support();
    const auto& weights = prior.weights();
    r.assign(support.size(), 0.0);
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < support.size(); ++k) {
        if (weights[k] <= 0.0) continue;
        r[k] = std::log(weights[k]) + log_normal_density(y_hat, support[k], sigma);
        shift = std::max(shift, r[k]);
    }
    if (!std::isfinite(shift)) return shift;
    for (std::size_t k = 0; k < support.size(); ++k) {
        r[k] = (weights[k] > 0.0) ? std::exp(r[k] - shift) : 0.0;
    }
    return shift;
}

void require_sigma(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw Error(ErrorCode::invalid_input, "noise scale must be positive and finite");
    }
}

double nearest_support_point(const DiscretePrior& prior, double y_hat) {
    double best = prior.support().front();
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < prior.size(); ++k) {
        if (prior.weights()[k] <= 0.0) continue;
        const double d = std::abs(prior.support()[k] - y_hat);
        // ties happen when y_hat dwarfs the support; take the point on y_hat's side
        if (d < best_dist || (d == best_dist && y_hat > prior.support()[k])) {
            best_dist = d;
            best = prior.support()[k];
        }
    }
    return best;
}

}  // namespace

// ---------------------------------------------------------------------------
// DiscretePrior / NoisyPanel

DiscretePrior::DiscretePrior(std::vector<double> support, std::vector<double> weights)
    : support_(std::move(support)), weights_(std::move(weights)) {
    if (support_.empty() || support_.size() != weights_.size()) {
        throw Error(ErrorCode::invalid_input,
                    "prior needs matching, nonempty support and weight vectors");
    }
    for (std::size_t k = 0; k < support_.size(); ++k) {
        if (!std::isfinite(support_[k]) || support_[k] < 0.0) {
            throw Error(ErrorCode::invalid_input, "prior support must be finite and nonnegative");
        }
        if (k > 0 && !(support_[k] > support_[k - 1])) {
            throw Error(ErrorCode::invalid_input, "prior support must be strictly increasing");
        }
        if (!(weights_[k] >= 0.0) || !std::isfinite(weights_[k])) {
            throw Error(ErrorCode::invalid_input, "prior weights must be finite and nonnegative");
        }
    }
    if (std::abs(sum_of(weights_) - 1.0) > 1e-10) {
        throw Error(ErrorCode::invalid_input, "prior weights must sum to one");
    }
}

DiscretePrior DiscretePrior::point_mass(double location) {
    return DiscretePrior({location}, {1.0});
}

DiscretePrior DiscretePrior::empirical(std::span<const double> values) {
    if (values.empty()) {
        throw Error(ErrorCode::invalid_input, "empirical prior of an empty sample");
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> support;
    std::vector<double> counts;
    for (double v : sorted) {
        if (!support.empty() && v == support.back()) {
            counts.back() += 1.0;
        } else {
            support.push_back(v);
            counts.push_back(1.0);
        }
    }
    const double n = static_cast<double>(sorted.size());
    for (double& c : counts) c /= n;
    return DiscretePrior(std::move(support), std::move(counts));
}

double DiscretePrior::mean() const {
    double m = 0.0;
    for (std::size_t k = 0; k < size(); ++k) m += weights_[k] * support_[k];
    return m;
}

double DiscretePrior::second_moment() const {
    double m = 0.0;
    for (std::size_t k = 0; k < size(); ++k) m += weights_[k] * support_[k] * support_[k];
    return m;
}

std::size_t DiscretePrior::effective_support(double threshold) const {
    return static_cast<std::size_t>(std::count_if(
        weights_.begin(), weights_.end(), [threshold](double w) { return w > threshold; }));
}

NoisyPanel::NoisyPanel(std::vector<double> estimates, std::vector<double> noise_scales)
    : estimates_(std::move(estimates)), noise_scales_(std::move(noise_scales)) {
    if (estimates_.empty() || estimates_.size() != noise_scales_.size()) {
        throw Error(ErrorCode::invalid_input,
                    "panel needs matching, nonempty estimate and noise-scale vectors");
    }
    for (std::size_t i = 0; i < estimates_.size(); ++i) {
        if (!std::isfinite(estimates_[i])) {
            throw Error(ErrorCode::invalid_input,
                        "non-finite estimate at household " + std::to_string(i));
        }
        if (!(noise_scales_[i] > 0.0) || !std::isfinite(noise_scales_[i])) {
            throw Error(ErrorCode::invalid_input,
                        "noise scale must be positive at household " + std::to_string(i));
        }
    }
}

double NoisyPanel::min_sigma() const {
    return *std::min_element(noise_scales_.begin(), noise_scales_.end());
}

double NoisyPanel::max_sigma() const {
    return *std::max_element(noise_scales_.begin(), noise_scales_.end());
}

double NoisyPanel::pooled_sigma() const {
    double s = 0.0;
    for (double v : noise_scales_) s += v * v;
    return std::sqrt(s / static_cast<double>(noise_scales_.size()));
}

// ---------------------------------------------------------------------------
// Grid

std::size_t default_grid_size(std::size_t n) {
    const auto root = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    return std::max<std::size_t>(root, 100);
}

std::vector<double> build_grid(const NoisyPanel& panel, std::size_t grid_size, GridKind kind) {
    const std::size_t n = panel.size();
    const auto required = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    if (grid_size < required || grid_size == 0) {
        throw Error(ErrorCode::invalid_config,
                    "grid needs at least ceil(sqrt(n)) = " + std::to_string(required) +
                        " points, got " + std::to_string(grid_size));
    }
    const auto& y = panel.estimates();
    const double sigma_max = panel.max_sigma();
    const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
    const double lo = std::max(0.0, *ymin - 3.0 * sigma_max);
    double hi = *ymax + 3.0 * sigma_max;
    // Every estimate sits far below zero; keep a nondegenerate span at the origin.
    if (hi <= lo) hi = lo + 6.0 * sigma_max;

    if (grid_size == 1) return {lo};

    std::vector<double> grid(grid_size);
    const double step = (hi - lo) / static_cast<double>(grid_size - 1);
    for (std::size_t k = 0; k < grid_size; ++k) grid[k] = lo + step * static_cast<double>(k);
    grid.back() = hi;
    if (kind == GridKind::uniform) return grid;

    // Quantiles of the clipped estimates, endpoints pinned to the span.
    std::vector<double> clipped(y.begin(), y.end());
    for (double& v : clipped) v = std::clamp(v, lo, hi);
    std::sort(clipped.begin(), clipped.end());
    std::vector<double> q(grid_size);
    for (std::size_t k = 0; k < grid_size; ++k) {
        const double pos =
            static_cast<double>(k) / static_cast<double>(grid_size - 1) * static_cast<double>(n - 1);
        const auto below = static_cast<std::size_t>(std::floor(pos));
        const std::size_t above = std::min(below + 1, n - 1);
        const double frac = pos - static_cast<double>(below);
        q[k] = clipped[below] + frac * (clipped[above] - clipped[below]);
    }
    q.front() = lo;
    q.back() = hi;
    const double eps = 1e-12 * (hi - lo);
    std::sort(q.begin(), q.end());
    q.erase(std::unique(q.begin(), q.end(), [eps](double a, double b) { return b - a <= eps; }),
            q.end());
    // Ties collapse quantiles; refill by splitting the widest gaps.
    while (q.size() < grid_size) {
        std::size_t widest = 0;
        for (std::size_t k = 1; k + 1 < q.size(); ++k) {
            if (q[k + 1] - q[k] > q[widest + 1] - q[widest]) widest = k;
        }
        q.insert(q.begin() + static_cast<std::ptrdiff_t>(widest + 1),
                 0.5 * (q[widest] + q[widest + 1]));
    }
    return q;
}

// ---------------------------------------------------------------------------
// NPMLE

NpmleFit fit_npmle(const NoisyPanel& panel, std::span<const double> grid, double tol,
                   int max_iter, bool keep_trace, bool accelerate) {
    if (!(tol > 0.0)) throw Error(ErrorCode::invalid_config, "NPMLE tolerance must be positive");
    if (max_iter < 1) throw Error(ErrorCode::invalid_config, "NPMLE max_iter must be >= 1");
    if (grid.empty()) throw Error(ErrorCode::invalid_config, "NPMLE grid is empty");
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (!std::isfinite(grid[k]) || grid[k] < 0.0 || (k > 0 && !(grid[k] > grid[k - 1]))) {
            throw Error(ErrorCode::invalid_config,
                        "NPMLE grid must be finite, nonnegative and strictly increasing");
        }
    }

    const std::size_t n = panel.size();
    const std::size_t K = grid.size();
    const auto& y = panel.estimates();
    const auto& sigma = panel.noise_scales();

    // Entries and weights below this are set to zero. Their products would
    // otherwise go subnormal as EM drains weight from unused grid points, and
    // subnormal arithmetic is slower by an order of magnitude.
    constexpr double kNegligible = 1e-150;
    auto flush = [](double v) { return v < kNegligible ? 0.0 : v; };

    // Row-shifted likelihood matrix: full[i*K + k] = phi_ik / max_j phi_ij.
    std::vector<double> full(n * K);
    std::vector<double> row_shift(n);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = &full[i * K];
        double shift = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
            row[k] = log_normal_density(y[i], grid[k], sigma[i]);
            shift = std::max(shift, row[k]);
        }
        if (!std::isfinite(shift)) {
            throw Error(ErrorCode::numerical_failure,
                        "non-finite likelihood at household " + std::to_string(i));
        }
        for (std::size_t k = 0; k < K; ++k) {
            const double v = std::exp(row[k] - shift);
            row[k] = v < kNegligible ? 0.0 : v;
        }
        row_shift[i] = shift;
    }
    const double mean_shift = sum_of(row_shift) / static_cast<double>(n);
    const double inv_n = 1.0 / static_cast<double>(n);

    // Average log-likelihood at `weights` over a matrix of width `width`;
    // fills `grad` with the directional derivatives D_k = (1/n) sum_i lik_ik / f_i.
    auto evaluate_on = [&](const std::vector<double>& mat, std::size_t width,
                           const std::vector<double>& weights, std::vector<double>& grad) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = &mat[i * width];
            // Four partial sums so the reduction vectorizes.
            double f0 = 0.0, f1 = 0.0, f2 = 0.0, f3 = 0.0;
            std::size_t k = 0;
            for (; k + 4 <= width; k += 4) {
                f0 += weights[k] * row[k];
                f1 += weights[k + 1] * row[k + 1];
                f2 += weights[k + 2] * row[k + 2];
                f3 += weights[k + 3] * row[k + 3];
            }
            for (; k < width; ++k) f0 += weights[k] * row[k];
            const double f = (f0 + f1) + (f2 + f3);
            if (!(f > 0.0) || !std::isfinite(f)) {
                throw Error(ErrorCode::numerical_failure,
                            "marginal density vanished at household " + std::to_string(i));
            }
            ll += std::log(f);
            const double inv_f = 1.0 / f;
            for (k = 0; k < width; ++k) grad[k] += row[k] * inv_f;
        }
        for (double& g : grad) g *= inv_n;
        const double avg = ll * inv_n + mean_shift;
        if (!std::isfinite(avg)) {
            throw Error(ErrorCode::numerical_failure, "non-finite NPMLE log-likelihood");
        }
        return avg;
    };

    // EM is multiplicative, so a weight flushed to zero stays zero. The
    // working matrix drops those columns once enough have accumulated;
    // cols maps working columns back to grid indices.
    std::vector<double> lik = full;
    std::vector<std::size_t> cols(K);
    for (std::size_t k = 0; k < K; ++k) cols[k] = k;
    std::size_t width = K;

    std::vector<double> w(K, 1.0 / static_cast<double>(K));
    std::vector<double> gradient(K);
    std::vector<double> trace;

    auto evaluate = [&](const std::vector<double>& weights, std::vector<double>& grad) {
        return evaluate_on(lik, width, weights, grad);
    };
    auto em_map = [&](const std::vector<double>& from, const std::vector<double>& grad,
                      std::vector<double>& to) {
        for (std::size_t k = 0; k < width; ++k) to[k] = from[k] * grad[k];
        const double total = sum_of(to);
        for (double& v : to) v = flush(v / total);
    };
    // Returns true when the working set shrank; callers resize their buffers.
    auto compact = [&]() {
        std::size_t live = 0;
        for (double v : w) live += v > 0.0 ? 1 : 0;
        if (live == 0 || 5 * live > 4 * width) return false;
        std::vector<std::size_t> keep;
        for (std::size_t k = 0; k < width; ++k) {
            if (w[k] > 0.0) keep.push_back(k);
        }
        std::vector<double> next(n * live);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < live; ++j) next[i * live + j] = lik[i * width + keep[j]];
        }
        std::vector<std::size_t> next_cols(live);
        std::vector<double> next_w(live), next_g(live);
        for (std::size_t j = 0; j < live; ++j) {
            next_cols[j] = cols[keep[j]];
            next_w[j] = w[keep[j]];
            next_g[j] = gradient[keep[j]];
        }
        lik.swap(next);
        cols.swap(next_cols);
        w.swap(next_w);
        gradient.swap(next_g);
        width = live;
        return true;
    };

    double previous = evaluate(w, gradient);
    if (keep_trace) trace.push_back(previous);
    int iterations = 0;
    bool converged = false;
    double current = previous;

    if (!accelerate) {
        std::vector<double> next(K);
        while (iterations < max_iter) {
            if (compact()) next.resize(width);
            em_map(w, gradient, next);
            w.swap(next);
            ++iterations;
            current = evaluate(w, gradient);
            if (keep_trace) trace.push_back(current);
            if (std::abs(current - previous) <= tol) {
                converged = true;
                break;
            }
            previous = current;
        }
    } else {
        // SQUAREM: two EM steps, a squared extrapolation, one stabilizing EM
        // step, and a fallback to the plain two-step iterate whenever the
        // extrapolated point does not improve the likelihood.
        std::vector<double> w1(K), w2(K), wx(K), wn(K), g2(K), gx(K), gn(K);
        while (iterations < max_iter) {
            if (compact()) {
                for (auto* v : {&w1, &w2, &wx, &wn, &g2, &gx, &gn}) v->resize(width);
            }
            em_map(w, gradient, w1);
            std::vector<double>& g1 = gx;
            const double ll1 = evaluate(w1, g1);
            em_map(w1, g1, w2);
            const double ll2 = evaluate(w2, g2);

            double rr = 0.0, vv = 0.0;
            for (std::size_t k = 0; k < width; ++k) {
                const double r = w1[k] - w[k];
                const double v = w2[k] - 2.0 * w1[k] + w[k];
                rr += r * r;
                vv += v * v;
            }
            double best_ll = ll2;
            bool extrapolated = false;
            if (vv > 0.0 && ll2 >= ll1) {
                const double alpha = std::min(-1.0, -std::sqrt(rr / vv));
                for (std::size_t k = 0; k < width; ++k) {
                    const double r = w1[k] - w[k];
                    const double v = w2[k] - 2.0 * w1[k] + w[k];
                    wx[k] = std::max(w[k] - 2.0 * alpha * r + alpha * alpha * v, 1e-3 * w2[k]);
                }
                const double total = sum_of(wx);
                for (double& v : wx) v = flush(v / total);
                try {
                    evaluate(wx, gx);
                    em_map(wx, gx, wn);
                    const double lln = evaluate(wn, gn);
                    if (lln >= ll2) {
                        best_ll = lln;
                        extrapolated = true;
                    }
                } catch (const Error&) {
                    // Extrapolation left the feasible region numerically; keep the EM iterate.
                }
            }
            if (extrapolated) {
                w.swap(wn);
                gradient.swap(gn);
            } else {
                w.swap(w2);
                gradient.swap(g2);
            }
            ++iterations;
            current = best_ll;
            if (keep_trace) trace.push_back(current);
            if (std::abs(current - previous) <= tol) {
                converged = true;
                break;
            }
            previous = current;
        }
    }

    // Back to the full grid; the stationarity check needs every column.
    std::vector<double> full_w(K, 0.0);
    for (std::size_t j = 0; j < width; ++j) full_w[cols[j]] = w[j];
    w.swap(full_w);
    gradient.assign(K, 0.0);
    evaluate_on(full, K, w, gradient);

    double residual = -std::numeric_limits<double>::infinity();
    for (double g : gradient) residual = std::max(residual, g - 1.0);

    return {DiscretePrior(std::vector<double>(grid.begin(), grid.end()), std::move(w)),
            iterations, converged, current, residual, std::move(trace)};
}

NpmleFit fit_npmle(const NoisyPanel& panel, const NpmleConfig& config) {
    const std::size_t size =
        config.grid_size == 0 ? default_grid_size(panel.size()) : config.grid_size;
    const auto grid = build_grid(panel, size, config.grid_kind);
    return fit_npmle(panel, grid, config.tol, config.max_iter, config.keep_trace,
                     config.accelerate);
}

double average_log_likelihood(const DiscretePrior& prior, const NoisyPanel& panel) {
    double total = 0.0;
    for (std::size_t i = 0; i < panel.size(); ++i) {
        total += marginal_log_density(prior, panel.estimates()[i], panel.noise_scales()[i]);
    }
    return total / static_cast<double>(panel.size());
}

// ---------------------------------------------------------------------------
// Posterior quantities

double marginal_log_density(const DiscretePrior& prior, double y_hat, double sigma) {
    require_sigma(sigma);
    std::vector<double> r;
    const double shift = shifted_components(prior, y_hat, sigma, r);
    if (!std::isfinite(shift)) return shift;
    return shift + std::log(sum_of(r));
}

PosteriorMean posterior_mean_detail(const DiscretePrior& prior, double y_hat, double sigma) {
    require_sigma(sigma);
    std::vector<double> r;
    const double shift = shifted_components(prior, y_hat, sigma, r);
    if (!std::isfinite(shift)) return {nearest_support_point(prior, y_hat), true};
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) {
        num += r[k] * prior.support()[k];
        den += r[k];
    }
    const double mean =
        std::clamp(num / den, prior.support().front(), prior.support().back());
    return {mean, false};
}

double posterior_mean(const DiscretePrior& prior, double y_hat, double sigma) {
    return posterior_mean_detail(prior, y_hat, sigma).value;
}

std::vector<double> posterior_means(const DiscretePrior& prior, const NoisyPanel& panel) {
    std::vector<double> out(panel.size());
    for (std::size_t i = 0; i < panel.size(); ++i) {
        out[i] = posterior_mean(prior, panel.estimates()[i], panel.noise_scales()[i]);
    }
    return out;
}

double tweedie_posterior_mean(const DiscretePrior& prior, double y_hat, double sigma) {
    require_sigma(sigma);
    std::vector<double> r;
    const double shift = shifted_components(prior, y_hat, sigma, r);
    if (!std::isfinite(shift)) return nearest_support_point(prior, y_hat);
    // d/dy log f(y) = sum_k r_k (mu_k - y) / sigma^2 / sum_k r_k
    const double var = sigma * sigma;
    double score_num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) {
        score_num += r[k] * (prior.support()[k] - y_hat) / var;
        den += r[k];
    }
    return y_hat + var * (score_num / den);
}

// ---------------------------------------------------------------------------
// Truncated-normal parametric EB

TruncNormParams fit_truncated_normal(const NoisyPanel& panel) {
    for (double s : panel.noise_scales()) {
        if (std::abs(s - 1.0) > 1e-12) {
            throw Error(ErrorCode::invalid_input,
                        "truncated-normal fit needs unit noise scales; rescale the panel first");
        }
    }
    const auto& y = panel.estimates();
    const double n = static_cast<double>(y.size());
    const double alpha = sum_of(y) / n;
    double ss = 0.0;
    for (double v : y) ss += (v - alpha) * (v - alpha);
    const double gamma_sq = std::max(0.0, ss / n - 1.0);
    return {alpha, gamma_sq, gamma_sq / (gamma_sq + 1.0)};
}

namespace {

// kappa(x) - x, the mean excess of a standard normal above x. For x >= 2 this
// is the tail of Laplace's continued fraction, 1 / (x + 2 / (x + 3 / (x + ...))),
// which avoids the cancellation in kappa(x) - x.
double mills_excess(double x) {
    if (x < 2.0) {
        const double tail = 0.5 * std::erfc(x / std::numbers::sqrt2);
        const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return phi / tail - x;
    }
    double t = x;
    for (int k = 120; k >= 2; --k) t = x + k / t;
    return 1.0 / t;
}

}  // namespace

double inverse_mills_ratio(double x) {
    if (x < 2.0) {
        const double tail = 0.5 * std::erfc(x / std::numbers::sqrt2);
        return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi) / tail;
    }
    return x + mills_excess(x);
}

double truncated_normal_posterior_mean(const TruncNormParams& params, double y_hat) {
    const double delta = params.alpha + params.nu_sq * (y_hat - params.alpha);
    if (params.nu_sq <= 0.0) return std::max(0.0, delta);
    const double nu = std::sqrt(params.nu_sq);
    // delta + nu kappa(-delta/nu) == nu (kappa(x) - x) with x = -delta/nu.
    return nu * mills_excess(-delta / nu);
}

}  // namespace targeting
