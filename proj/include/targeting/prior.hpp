#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace targeting {

// A discrete mixing distribution: strictly increasing nonnegative support
// with weights summing to one.
class DiscretePrior {
public:
    DiscretePrior(std::vector<double> support, std::vector<double> weights);

    // Point mass at `location`.
    static DiscretePrior point_mass(double location);
    // Empirical distribution of `values` (ties merged).
    static DiscretePrior empirical(std::span<const double> values);

    const std::vector<double>& support() const noexcept { return support_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    std::size_t size() const noexcept { return support_.size(); }

    double mean() const;
    double second_moment() const;
    // Number of weights above `threshold`.
    std::size_t effective_support(double threshold = 1e-6) const;

private:
    std::vector<double> support_;
    std::vector<double> weights_;
};

// Noisy income estimates with their (known) standard errors.
class NoisyPanel {
public:
    NoisyPanel(std::vector<double> estimates, std::vector<double> noise_scales);

    const std::vector<double>& estimates() const noexcept { return estimates_; }
    const std::vector<double>& noise_scales() const noexcept { return noise_scales_; }
    std::size_t size() const noexcept { return estimates_.size(); }

    double min_sigma() const;
    double max_sigma() const;
    // sqrt of the mean noise variance.
    double pooled_sigma() const;

private:
    std::vector<double> estimates_;
    std::vector<double> noise_scales_;
};

struct TruncNormParams {
    double alpha;     // prior mean before truncation
    double gamma_sq;  // prior variance
    double nu_sq;     // gamma_sq / (gamma_sq + 1)
};

enum class GridKind { uniform, quantile };

struct NpmleConfig {
    std::size_t grid_size = 0;  // 0 selects default_grid_size(n)
    GridKind grid_kind = GridKind::uniform;
    double tol = 1e-9;          // on successive average log-likelihoods
    int max_iter = 10000;
    bool keep_trace = true;
    // Squared extrapolation between EM steps, kept only when it raises the
    // likelihood. Off gives the plain EM fixed-point iteration.
    bool accelerate = true;
};

struct NpmleFit {
    DiscretePrior prior;
    int iterations;
    bool converged;               // EM stopping rule met before max_iter
    double log_likelihood;        // final average marginal log-likelihood
    double stationarity_residual; // max_k D_k - 1, where D_k is the directional derivative
    std::vector<double> trace;    // average log-likelihood after each iteration
};

// Stationarity residuals at or below this count as first-order optimal.
inline constexpr double kStationarityTol = 1e-6;

// max(ceil(sqrt(n)), 100).
std::size_t default_grid_size(std::size_t n);

// Grid spanning [max(0, min y - 3 sigma_max), max y + 3 sigma_max].
// Throws Error(invalid_config) when grid_size < ceil(sqrt(n)).
std::vector<double> build_grid(const NoisyPanel& panel, std::size_t grid_size,
                               GridKind kind = GridKind::uniform);

// Nonparametric maximum likelihood over a fixed grid by EM on the weights.
// The trace holds one average log-likelihood per iteration and never decreases.
NpmleFit fit_npmle(const NoisyPanel& panel, std::span<const double> grid, double tol = 1e-9,
                   int max_iter = 10000, bool keep_trace = true, bool accelerate = true);
NpmleFit fit_npmle(const NoisyPanel& panel, const NpmleConfig& config = {});

// Average marginal log-likelihood of the panel under `prior`.
double average_log_likelihood(const DiscretePrior& prior, const NoisyPanel& panel);

double marginal_log_density(const DiscretePrior& prior, double y_hat, double sigma);

struct PosteriorMean {
    double value;
    bool fallback;  // every component underflowed; value is the nearest support point
};

PosteriorMean posterior_mean_detail(const DiscretePrior& prior, double y_hat, double sigma);
double posterior_mean(const DiscretePrior& prior, double y_hat, double sigma);
std::vector<double> posterior_means(const DiscretePrior& prior, const NoisyPanel& panel);

// y + sigma^2 d/dy log f(y), with the score taken analytically from the mixture.
double tweedie_posterior_mean(const DiscretePrior& prior, double y_hat, double sigma);

// Method-of-moments fit for a normal prior left-truncated at zero. Requires
// every noise scale to equal one; rescale beforehand.
TruncNormParams fit_truncated_normal(const NoisyPanel& panel);

// kappa(x) = phi(x) / (1 - Phi(x)).
double inverse_mills_ratio(double x);

// Posterior mean under a normal prior truncated at zero with unit noise:
// delta + nu kappa(-delta / nu), where delta = alpha + nu^2 (y - alpha).
double truncated_normal_posterior_mean(const TruncNormParams& params, double y_hat);

}  // namespace targeting
