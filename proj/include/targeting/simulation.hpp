#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "targeting/evaluation.hpp"
#include "targeting/prior.hpp"
#include "targeting/rng.hpp"
#include "targeting/rules.hpp"

namespace targeting {

enum class IncomeFamily { lognormal, truncnormal_mixture, two_point, external };

struct MixtureComponent {
    double weight;
    double mean;
    double sd;
};

struct IncomeSpec {
    IncomeFamily family = IncomeFamily::lognormal;
    double meanlog = 0.0;
    double sdlog = 1.0;
    std::vector<MixtureComponent> components;  // truncated at zero
    double low = 3.0;
    double high = 9.0;
    double p_low = 0.5;
    std::vector<double> external_values;  // family == external
    std::string external_path;            // provenance only
};

struct SyntheticIncomes {
    std::vector<double> mu;
    // The distribution the draws came from, when it is discrete.
    std::optional<DiscretePrior> generative_prior;
};

// Draws n nonnegative conditional means. Throws Error(invalid_config) for bad
// parameters. The external family returns its stored values and ignores n
// unless n is smaller, in which case the first n values are used.
SyntheticIncomes synthetic_income_generator(const IncomeSpec& spec, std::size_t n, Rng& rng);

IncomeFamily parse_income_family(std::string_view name);
std::string_view income_family_name(IncomeFamily family);

// sigma_c with Var(y) / E[sigma_i^2] = snr when sigma_i ~ U[sigma_c/2, 3 sigma_c/2].
double calibrate_noise_scale(std::span<const double> incomes, double snr_target);

// z = lower median of incomes, B = fraction * total poverty gap.
PolicyContext make_policy_context(std::span<const double> incomes, double budget_fraction);

// sigma_i ~ U[sigma_c/2, 3 sigma_c/2], y_hat_i ~ N(mu_i, sigma_i^2), drawn
// household by household (sigma first).
NoisyPanel generate_panel(std::span<const double> mu, double sigma_c, Rng& rng);

struct SimConfig {
    std::size_t n = 1000;
    std::vector<double> snr_levels{0.25};
    std::size_t replications = 200;
    std::uint64_t seed = 1;
    double budget_fraction = 0.1;
    std::vector<RuleSpec> rules;
    IncomeSpec income;
    LossKind loss = LossKind::squared;
    // Idiosyncratic income noise: y = mu + eps, eps ~ N(0, sd^2), drawn once.
    double income_noise_sd = 0.0;
    // Redraw mu from the generative prior every replication (Bayes design)
    // instead of holding the population fixed.
    bool redraw_mu = false;
    // Overrides the median poverty line.
    std::optional<double> poverty_line;
    // 0 picks TARGETING_THREADS or the hardware concurrency.
    std::size_t threads = 0;
};

struct ReplicationRecord {
    double snr = 0.0;
    std::size_t replication = 0;
    RuleKind rule = RuleKind::plug_in;
    MetricsReport metrics;
    double multiplier = 0.0;
    std::size_t active_count = 0;
    double shrink_factor = 1.0;
    std::string error;  // empty on success
    double runtime_seconds = 0.0;

    bool ok() const noexcept { return error.empty(); }
};

struct LevelSetup {
    double snr;
    double sigma_c;
    double poverty_line;
    double budget;
};

struct ExperimentResult {
    std::vector<ReplicationRecord> records;  // ordered by (snr, replication, rule)
    std::vector<LevelSetup> levels;
    std::vector<std::string> notes;

    std::size_t failures() const;
};

// Worker count from SimConfig::threads, then TARGETING_THREADS, then hardware.
std::size_t resolve_thread_count(std::size_t requested);

ExperimentResult run_experiment(const SimConfig& config);

}  // namespace targeting
