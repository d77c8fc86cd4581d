#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "targeting/error.hpp"
#include "targeting/prior.hpp"

using namespace targeting;

namespace {

NoisyPanel draw_panel(const std::vector<double>& support, const std::vector<double>& weights,
                      std::size_t n, double sigma, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> y(n);
    for (double& v : y) v = support[pick(gen)] + sigma * nd(gen);
    return NoisyPanel(std::move(y), std::vector<double>(n, sigma));
}

DiscretePrior random_prior(std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t k = 1 + gen() % 8;
    std::vector<double> s(k), w(k);
    double x = 20.0 * u(gen);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        s[i] = x;
        x += 0.1 + 5.0 * u(gen);
        w[i] = 0.05 + u(gen);
        total += w[i];
    }
    for (double& v : w) v /= total;
    return DiscretePrior(s, w);
}

double log_phi(double y, double mu, double sigma) {
    const double z = (y - mu) / sigma;
    return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * M_PI);
}

}  // namespace

TEST(DiscretePrior, Validation) {
    EXPECT_THROW(DiscretePrior({}, {}), Error);
    EXPECT_THROW(DiscretePrior({1, 1}, {0.5, 0.5}), Error);
    EXPECT_THROW(DiscretePrior({-1, 1}, {0.5, 0.5}), Error);
    EXPECT_THROW(DiscretePrior({1, 2}, {0.5, 0.6}), Error);
    EXPECT_NO_THROW(DiscretePrior({1, 2}, {0.5, 0.5 + 5e-11}));
    const DiscretePrior e = DiscretePrior::empirical(std::vector<double>{3, 1, 3, 2});
    ASSERT_EQ(e.size(), 3u);
    EXPECT_DOUBLE_EQ(e.weights()[2], 0.5);
    EXPECT_DOUBLE_EQ(e.mean(), 2.25);
}

TEST(NoisyPanel, Validation) {
    EXPECT_THROW(NoisyPanel({1.0}, {0.0}), Error);
    EXPECT_THROW(NoisyPanel({1.0, 2.0}, {1.0}), Error);
    const NoisyPanel p({1.0, 2.0}, {1.0, 3.0});
    EXPECT_DOUBLE_EQ(p.pooled_sigma(), std::sqrt(5.0));
}

TEST(Grid, DefaultSize) {
    EXPECT_EQ(default_grid_size(100), 100u);
    EXPECT_EQ(default_grid_size(40000), 200u);
    EXPECT_EQ(default_grid_size(40001), 201u);
}

TEST(Grid, SpanRule) {
    const NoisyPanel p(std::vector<double>(10, 5.0), std::vector<double>(10, 1.0));
    const auto g = build_grid(p, 100);
    ASSERT_EQ(g.size(), 100u);
    EXPECT_DOUBLE_EQ(g.front(), 2.0);
    EXPECT_DOUBLE_EQ(g.back(), 8.0);
}

TEST(Grid, ClipsAtZero) {
    const NoisyPanel p({0.5, 4.0}, {1.0, 1.0});
    const auto g = build_grid(p, 100);
    EXPECT_EQ(g.front(), 0.0);
    EXPECT_DOUBLE_EQ(g.back(), 7.0);
}

TEST(Grid, TooSmallIsConfigError) {
    const NoisyPanel p(std::vector<double>(400, 5.0), std::vector<double>(400, 1.0));
    try {
        build_grid(p, 19);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::invalid_config);
    }
    EXPECT_NO_THROW(build_grid(p, 20));
}

TEST(Grid, QuantileGridIsIncreasing) {
    const NoisyPanel p = draw_panel({3, 9}, {0.5, 0.5}, 500, 1.0, 4);
    const auto g = build_grid(p, 100, GridKind::quantile);
    ASSERT_EQ(g.size(), 100u);
    for (std::size_t k = 1; k < g.size(); ++k) EXPECT_GT(g[k], g[k - 1]);
    EXPECT_GE(g.front(), 0.0);
}

TEST(Npmle, PointMassRecovery) {
    const NoisyPanel p = draw_panel({10.0}, {1.0}, 500, 0.1, 5);
    const NpmleFit fit = fit_npmle(p);
    EXPECT_NEAR(fit.prior.mean(), 10.0, 0.05);
    double near = 0.0;
    for (std::size_t k = 0; k < fit.prior.size(); ++k) {
        if (std::abs(fit.prior.support()[k] - 10.0) <= 0.3) near += fit.prior.weights()[k];
    }
    EXPECT_GE(near, 0.95);
}

TEST(Npmle, TwoPointMoments) {
    const NoisyPanel p = draw_panel({3.0, 9.0}, {0.5, 0.5}, 2000, 1.0, 6);
    const NpmleFit fit = fit_npmle(p);
    EXPECT_TRUE(fit.converged);
    EXPECT_NEAR(fit.prior.mean(), 6.0, 0.15);
    // Second moment 45; 0.15 on the mean scales to roughly 2 * 6 * 0.15 here.
    EXPECT_NEAR(fit.prior.second_moment(), 45.0, 1.8);
}

TEST(Npmle, TraceNondecreasing) {
    const NoisyPanel p = draw_panel({3.0, 9.0}, {0.5, 0.5}, 1000, 1.0, 7);
    for (bool accelerate : {true, false}) {
        NpmleConfig c;
        c.accelerate = accelerate;
        c.max_iter = 3000;
        const NpmleFit fit = fit_npmle(p, c);
        ASSERT_GE(fit.trace.size(), 2u);
        for (std::size_t k = 1; k < fit.trace.size(); ++k) {
            EXPECT_GE(fit.trace[k], fit.trace[k - 1]) << "iteration " << k;
        }
        EXPECT_DOUBLE_EQ(fit.trace.back(), fit.log_likelihood);
    }
}

TEST(Npmle, AccelerationReachesAtLeastPlainEmLikelihood) {
    const NoisyPanel p = draw_panel({1.0, 4.0, 5.0}, {0.3, 0.3, 0.4}, 1500, 1.5, 8);
    NpmleConfig plain;
    plain.accelerate = false;
    const NpmleFit a = fit_npmle(p);
    const NpmleFit b = fit_npmle(p, plain);
    EXPECT_GE(a.log_likelihood, b.log_likelihood - 1e-8);
    EXPECT_LE(a.stationarity_residual, 1e-3);
}

TEST(Npmle, BeatsUniformWeights) {
    const NoisyPanel p = draw_panel({2.0, 7.0}, {0.7, 0.3}, 400, 1.0, 9);
    const auto grid = build_grid(p, 100);
    const NpmleFit fit = fit_npmle(p, grid);
    const DiscretePrior uniform(grid, std::vector<double>(grid.size(), 1.0 / grid.size()));
    EXPECT_GE(fit.log_likelihood, average_log_likelihood(uniform, p));
    EXPECT_NEAR(fit.log_likelihood, average_log_likelihood(fit.prior, p), 1e-10);
}

TEST(Npmle, DegeneratePanel) {
    const NoisyPanel p(std::vector<double>(50, 5.0), std::vector<double>(50, 1.0));
    const NpmleFit fit = fit_npmle(p);
    EXPECT_NEAR(fit.prior.mean(), 5.0, 0.05);
}

TEST(Npmle, RejectsBadSettings) {
    const NoisyPanel p({1.0, 2.0}, {1.0, 1.0});
    const std::vector<double> grid{0.0, 1.0, 2.0};
    EXPECT_THROW(fit_npmle(p, grid, 0.0), Error);
    EXPECT_THROW(fit_npmle(p, grid, 1e-9, 0), Error);
    EXPECT_THROW(fit_npmle(p, std::vector<double>{1.0, 1.0}), Error);
}

TEST(Npmle, ImprovesOnRawEstimates) {
    const std::vector<double> support{3.0, 9.0};
    std::mt19937_64 gen(10);
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> nd(0.0, 2.0);
    std::vector<double> mu(2000), y(2000);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        mu[i] = coin(gen) ? 9.0 : 3.0;
        y[i] = mu[i] + nd(gen);
    }
    const NoisyPanel p(y, std::vector<double>(y.size(), 2.0));
    const NpmleFit fit = fit_npmle(p);
    const auto post = posterior_means(fit.prior, p);
    double mse_raw = 0.0, mse_eb = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        mse_raw += (y[i] - mu[i]) * (y[i] - mu[i]);
        mse_eb += (post[i] - mu[i]) * (post[i] - mu[i]);
    }
    EXPECT_LT(mse_eb, 0.5 * mse_raw);
}

TEST(Marginal, PointMassIsGaussianLogDensity) {
    const DiscretePrior g = DiscretePrior::point_mass(4.0);
    EXPECT_NEAR(marginal_log_density(g, 5.5, 2.0), log_phi(5.5, 4.0, 2.0), 1e-14);
}

TEST(Marginal, MatchesNaiveSummation) {
    std::mt19937_64 gen(17);
    for (int t = 0; t < 200; ++t) {
        const DiscretePrior g = random_prior(gen);
        const double sigma = 0.5 + 3.0 * std::uniform_real_distribution<double>(0, 1)(gen);
        const double y = std::uniform_real_distribution<double>(-5, 50)(gen);
        double direct = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            direct += g.weights()[k] * std::exp(log_phi(y, g.support()[k], sigma));
        }
        if (direct < 1e-250) continue;
        EXPECT_NEAR(std::exp(marginal_log_density(g, y, sigma)), direct, 1e-12 * direct);
    }
}

TEST(Marginal, FarTailStaysFinite) {
    const DiscretePrior g({0.0, 1.0}, {0.5, 0.5});
    EXPECT_TRUE(std::isfinite(marginal_log_density(g, 1e3, 1.0)));
}

TEST(Posterior, PointMassAndSymmetry) {
    const DiscretePrior pm = DiscretePrior::point_mass(7.0);
    for (double y : {-10.0, 0.0, 7.0, 100.0}) EXPECT_DOUBLE_EQ(posterior_mean(pm, y, 1.5), 7.0);
    const DiscretePrior two({2.0, 8.0}, {0.5, 0.5});
    EXPECT_NEAR(posterior_mean(two, 5.0, 1.0), 5.0, 1e-12);
}

TEST(Posterior, MatchesNaiveOracle) {
    std::mt19937_64 gen(18);
    for (int t = 0; t < 300; ++t) {
        const DiscretePrior g = random_prior(gen);
        const double sigma = 1.0 + 4.0 * std::uniform_real_distribution<double>(0, 1)(gen);
        const double y = std::uniform_real_distribution<double>(0, 40)(gen);
        const double ref = oracle::naive_posterior_mean(g.support(), g.weights(), y, sigma);
        EXPECT_NEAR(posterior_mean(g, y, sigma), ref, 1e-10 * std::max(1.0, std::abs(ref)));
    }
}

TEST(Posterior, UnderflowFallsBackToNearestPoint) {
    const DiscretePrior g({0.0, 1.0}, {0.5, 0.5});
    const PosteriorMean pm = posterior_mean_detail(g, 1e200, 1e-200);
    EXPECT_TRUE(pm.fallback);
    EXPECT_DOUBLE_EQ(pm.value, 1.0);
}

TEST(Posterior, StaysInsideSupportRange) {
    const DiscretePrior g({2.0, 3.0, 9.0}, {0.2, 0.5, 0.3});
    for (double y = -50.0; y <= 60.0; y += 0.5) {
        const double m = posterior_mean(g, y, 2.0);
        EXPECT_GE(m, 2.0);
        EXPECT_LE(m, 9.0);
    }
}

TEST(Posterior, ShrinksTowardPriorMeanForUnimodalPrior) {
    const DiscretePrior g({1, 2, 3, 4, 5}, {0.1, 0.2, 0.4, 0.2, 0.1});
    const double m0 = g.mean();
    for (double y = -5.0; y <= 11.0; y += 0.25) {
        EXPECT_LE(std::abs(posterior_mean(g, y, 1.0) - m0), std::abs(y - m0) + 1e-12);
    }
}

TEST(Tweedie, PointMass) {
    const DiscretePrior pm = DiscretePrior::point_mass(3.0);
    EXPECT_NEAR(tweedie_posterior_mean(pm, 10.0, 2.0), 3.0, 1e-12);
}

TEST(Tweedie, AgreesWithPosteriorMean) {
    std::mt19937_64 gen(19);
    for (int t = 0; t < 1000; ++t) {
        const DiscretePrior g = random_prior(gen);
        const double sigma = 0.5 + 4.0 * std::uniform_real_distribution<double>(0, 1)(gen);
        const double y = std::uniform_real_distribution<double>(-5, 50)(gen);
        EXPECT_NEAR(tweedie_posterior_mean(g, y, sigma), posterior_mean(g, y, sigma), 1e-10);
    }
}

TEST(Tweedie, AgreesWithFiniteDifferences) {
    std::mt19937_64 gen(20);
    for (int t = 0; t < 100; ++t) {
        const DiscretePrior g = random_prior(gen);
        const double y = std::uniform_real_distribution<double>(0, 30)(gen);
        const double fd = oracle::finite_difference_tweedie(g.support(), g.weights(), y, 3.0);
        EXPECT_NEAR(tweedie_posterior_mean(g, y, 3.0), fd, 1e-5);
    }
}

TEST(TruncNormal, MomentFit) {
    // Mean 5, population variance 3.
    const std::vector<double> y{5 - 3, 5 + 3, 5, 5, 5, 5};
    const NoisyPanel p(y, std::vector<double>(y.size(), 1.0));
    const TruncNormParams t = fit_truncated_normal(p);
    EXPECT_DOUBLE_EQ(t.alpha, 5.0);
    EXPECT_DOUBLE_EQ(t.gamma_sq, 2.0);
    EXPECT_DOUBLE_EQ(t.nu_sq, 2.0 / 3.0);
}

TEST(TruncNormal, SmallVarianceClamps) {
    const NoisyPanel p({1.0, 1.5, 2.0}, {1.0, 1.0, 1.0});
    const TruncNormParams t = fit_truncated_normal(p);
    EXPECT_EQ(t.gamma_sq, 0.0);
    EXPECT_EQ(t.nu_sq, 0.0);
    EXPECT_DOUBLE_EQ(truncated_normal_posterior_mean(t, 0.0), t.alpha);
}

TEST(TruncNormal, RequiresUnitNoise) {
    const NoisyPanel p({1.0, 2.0}, {1.0, 2.0});
    EXPECT_THROW(fit_truncated_normal(p), Error);
}

TEST(TruncNormal, SamplingRecovery) {
    std::mt19937_64 gen(21);
    std::normal_distribution<double> prior(2.0, 2.0), noise(0.0, 1.0);
    std::vector<double> mu, y;
    while (mu.size() < 200000) {
        const double m = prior(gen);
        if (m < 0.0) continue;
        mu.push_back(m);
        y.push_back(m + noise(gen));
    }
    double mean = 0.0, var = 0.0;
    for (double v : mu) mean += v;
    mean /= mu.size();
    for (double v : mu) var += (v - mean) * (v - mean);
    var /= mu.size();
    const TruncNormParams t = fit_truncated_normal(NoisyPanel(y, std::vector<double>(y.size(), 1.0)));
    // The moments estimate the truncated distribution's mean and variance.
    EXPECT_NEAR(t.alpha, mean, 0.1);
    EXPECT_NEAR(t.gamma_sq, var, 0.1);
}

TEST(TruncNormal, MillsRatio) {
    EXPECT_NEAR(inverse_mills_ratio(0.0), std::sqrt(2.0 / M_PI), 1e-15);
    for (double x : {-30.0, -3.0, -0.5, 0.7, 1.9, 2.0, 2.1, 5.0, 10.0, 40.0}) {
        const double ref = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI) / (0.5 * std::erfc(x / std::sqrt(2.0)));
        if (x <= 10.0) {
            EXPECT_NEAR(inverse_mills_ratio(x), ref, 1e-12 * ref) << x;
        }
        EXPECT_GT(inverse_mills_ratio(x), std::max(0.0, x));
    }
    EXPECT_NEAR(inverse_mills_ratio(1e4), 1e4, 1e-3);
}

TEST(TruncNormal, PosteriorMeanAtZeroShift) {
    const TruncNormParams t{0.0, 3.0, 0.75};
    EXPECT_NEAR(truncated_normal_posterior_mean(t, 0.0), std::sqrt(0.75) * 0.7978845608028654, 1e-12);
}

TEST(TruncNormal, LargeShiftApproachesDelta) {
    const TruncNormParams t{50.0, 4.0, 0.8};
    const double delta = 50.0 + 0.8 * (60.0 - 50.0);
    EXPECT_NEAR(truncated_normal_posterior_mean(t, 60.0), delta, 1e-12);
}

TEST(TruncNormal, MatchesQuadrature) {
    for (double alpha : {-2.0, 0.5, 3.0}) {
        for (double g2 : {0.3, 1.0, 6.0}) {
            const TruncNormParams t{alpha, g2, g2 / (g2 + 1.0)};
            for (double y : {-8.0, -2.0, 0.0, 1.5, 6.0}) {
                const double ref = oracle::truncnorm_posterior_mean_quadrature(alpha, g2, y);
                const double got = truncated_normal_posterior_mean(t, y);
                EXPECT_NEAR(got, ref, 1e-6) << alpha << " " << g2 << " " << y;
                EXPECT_GT(got, 0.0);
            }
        }
    }
}
