#include "targeting/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>

#include "targeting/error.hpp"

namespace targeting {

namespace {

// Stream tags for Rng::derive.
constexpr std::uint64_t kIncomeStream = 1;
constexpr std::uint64_t kEpsilonStream = 2;
constexpr std::uint64_t kReplicationStream = 3;
constexpr std::uint64_t kRedrawStream = 4;

double population_variance(std::span<const double> v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(v.size());
}

double prior_variance(const DiscretePrior& g) {
    const double m = g.mean();
    return std::max(0.0, g.second_moment() - m * m);
}

double prior_lower_median(const DiscretePrior& g) {
    double cdf = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        cdf += g.weights()[k];
        if (cdf >= 0.5 - 1e-12) return g.support()[k];
    }
    return g.support().back();
}

double prior_expected_gap(const DiscretePrior& g, double z) {
    double total = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        total += g.weights()[k] * std::max(0.0, z - g.support()[k]);
    }
    return total;
}

double draw_truncated_at_zero(double mean, double sd, Rng& rng) {
    if (sd == 0.0) return std::max(0.0, mean);
    for (int attempt = 0; attempt < 1000000; ++attempt) {
        const double x = rng.normal(mean, sd);
        if (x >= 0.0) return x;
    }
    throw Error(ErrorCode::invalid_config,
                "truncated-normal component has negligible mass above zero");
}

void validate_spec(const IncomeSpec& spec) {
    switch (spec.family) {
        case IncomeFamily::lognormal:
            if (!std::isfinite(spec.meanlog) || !(spec.sdlog >= 0.0) || !std::isfinite(spec.sdlog)) {
                throw Error(ErrorCode::invalid_config, "lognormal needs finite meanlog and sdlog >= 0");
            }
            break;
        case IncomeFamily::truncnormal_mixture: {
            if (spec.components.empty()) {
                throw Error(ErrorCode::invalid_config, "mixture needs at least one component");
            }
            double total = 0.0;
            for (const auto& c : spec.components) {
                if (!(c.weight > 0.0) || !std::isfinite(c.mean) || !(c.sd >= 0.0) ||
                    !std::isfinite(c.sd)) {
                    throw Error(ErrorCode::invalid_config,
                                "mixture components need weight > 0, finite mean, sd >= 0");
                }
                total += c.weight;
            }
            if (std::abs(total - 1.0) > 1e-9) {
                throw Error(ErrorCode::invalid_config, "mixture weights must sum to 1");
            }
            break;
        }
        case IncomeFamily::two_point:
            if (!(spec.low >= 0.0) || !(spec.high >= spec.low) || !std::isfinite(spec.high) ||
                !(spec.p_low >= 0.0 && spec.p_low <= 1.0)) {
                throw Error(ErrorCode::invalid_config,
                            "two-point needs 0 <= low <= high and p_low in [0, 1]");
            }
            break;
        case IncomeFamily::external:
            if (spec.external_values.empty()) {
                throw Error(ErrorCode::invalid_config, "external income source is empty");
            }
            for (double v : spec.external_values) {
                if (!(v >= 0.0) || !std::isfinite(v)) {
                    throw Error(ErrorCode::invalid_config,
                                "external incomes must be finite and nonnegative");
                }
            }
            break;
    }
}

std::optional<DiscretePrior> two_point_prior(const IncomeSpec& spec) {
    if (spec.low == spec.high || spec.p_low == 1.0) return DiscretePrior::point_mass(spec.low);
    if (spec.p_low == 0.0) return DiscretePrior::point_mass(spec.high);
    return DiscretePrior({spec.low, spec.high}, {spec.p_low, 1.0 - spec.p_low});
}

struct Population {
    std::vector<double> mu;
    std::vector<double> y;
    std::optional<DiscretePrior> prior;  // for the oracle rule
};

Population realize(const SimConfig& config, SyntheticIncomes draw, Rng& eps_rng) {
    Population p;
    p.mu = std::move(draw.mu);
    p.y = p.mu;
    if (config.income_noise_sd > 0.0) {
        for (double& v : p.y) v += eps_rng.normal(0.0, config.income_noise_sd);
    }
    if (config.redraw_mu) {
        p.prior = std::move(draw.generative_prior);
    } else if (config.income.family != IncomeFamily::external) {
        // Fixed population: the oracle knows the exact distribution of mu.
        p.prior = DiscretePrior::empirical(p.mu);
    }
    return p;
}

std::vector<ReplicationRecord> run_replication(const SimConfig& config, const Population& pop,
                                               const LevelSetup& level, std::size_t rep, Rng& rng) {
    const PolicyContext ctx(level.poverty_line, level.budget);
    const NoisyPanel panel = generate_panel(pop.mu, level.sigma_c, rng);
    std::optional<Evaluator> evaluator;
    std::string evaluator_error;
    try {
        evaluator.emplace(pop.y, ctx, config.loss);
    } catch (const std::exception& e) {
        evaluator_error = e.what();
    }

    const RuleInputs inputs{panel, pop.y, pop.prior ? &*pop.prior : nullptr, level.sigma_c};
    std::vector<ReplicationRecord> out;
    out.reserve(config.rules.size());
    for (const RuleSpec& spec : config.rules) {
        ReplicationRecord rec;
        rec.snr = level.snr;
        rec.replication = rep;
        rec.rule = spec.kind;
        const auto start = std::chrono::steady_clock::now();
        try {
            if (!evaluator) throw Error(ErrorCode::undefined_metric, evaluator_error);
            RuleOutput result = apply_rule(spec, inputs, ctx);
            rec.metrics = evaluator->report(result.transfers);
            rec.multiplier = result.meta.multiplier;
            rec.active_count = result.meta.active_count;
            rec.shrink_factor = result.meta.shrink_factor;
        } catch (const std::exception& e) {
            rec.error = e.what();
            if (rec.error.empty()) rec.error = "rule failed";
        }
        rec.runtime_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.push_back(std::move(rec));
    }
    return out;
}

void validate_config(const SimConfig& config) {
    if (config.replications < 1) throw Error(ErrorCode::invalid_config, "replications must be >= 1");
    if (config.snr_levels.empty()) throw Error(ErrorCode::invalid_config, "no SNR levels given");
    for (double s : config.snr_levels) {
        if (!(s > 0.0) || !std::isfinite(s)) {
            throw Error(ErrorCode::invalid_config, "SNR levels must be positive");
        }
    }
    if (!(config.budget_fraction > 0.0 && config.budget_fraction <= 1.0)) {
        throw Error(ErrorCode::invalid_config, "budget_fraction must lie in (0, 1]");
    }
    if (config.rules.empty()) throw Error(ErrorCode::invalid_config, "no rules given");
    if (config.income.family != IncomeFamily::external && config.n == 0) {
        throw Error(ErrorCode::invalid_config, "n must be positive");
    }
    if (!(config.income_noise_sd >= 0.0) || !std::isfinite(config.income_noise_sd)) {
        throw Error(ErrorCode::invalid_config, "income_noise_sd must be >= 0");
    }
    if (config.redraw_mu && config.income.family != IncomeFamily::two_point) {
        throw Error(ErrorCode::invalid_config, "redraw_mu needs a discrete generative prior");
    }
    if (config.poverty_line && !std::isfinite(*config.poverty_line)) {
        throw Error(ErrorCode::invalid_config, "poverty_line must be finite");
    }
}

}  // namespace

IncomeFamily parse_income_family(std::string_view name) {
    if (name == "lognormal") return IncomeFamily::lognormal;
    if (name == "truncnormal_mixture" || name == "truncnormal-mixture") {
        return IncomeFamily::truncnormal_mixture;
    }
    if (name == "two_point" || name == "two-point") return IncomeFamily::two_point;
    if (name == "external" || name == "file") return IncomeFamily::external;
    throw Error(ErrorCode::invalid_config, "unknown income family '" + std::string(name) + "'");
}

std::string_view income_family_name(IncomeFamily family) {
    switch (family) {
        case IncomeFamily::lognormal: return "lognormal";
        case IncomeFamily::truncnormal_mixture: return "truncnormal_mixture";
        case IncomeFamily::two_point: return "two_point";
        case IncomeFamily::external: return "external";
    }
    return "unknown";
}

SyntheticIncomes synthetic_income_generator(const IncomeSpec& spec, std::size_t n, Rng& rng) {
    validate_spec(spec);
    SyntheticIncomes out;
    switch (spec.family) {
        case IncomeFamily::lognormal:
            out.mu.resize(n);
            for (double& v : out.mu) v = std::exp(spec.meanlog + spec.sdlog * rng.normal());
            break;
        case IncomeFamily::truncnormal_mixture:
            out.mu.resize(n);
            for (double& v : out.mu) {
                const double u = rng.uniform();
                double acc = 0.0;
                std::size_t pick = spec.components.size() - 1;
                for (std::size_t c = 0; c < spec.components.size(); ++c) {
                    acc += spec.components[c].weight;
                    if (u < acc) {
                        pick = c;
                        break;
                    }
                }
                v = draw_truncated_at_zero(spec.components[pick].mean, spec.components[pick].sd, rng);
            }
            break;
        case IncomeFamily::two_point:
            out.mu.resize(n);
            for (double& v : out.mu) v = rng.uniform() < spec.p_low ? spec.low : spec.high;
            out.generative_prior = two_point_prior(spec);
            break;
        case IncomeFamily::external: {
            const std::size_t take =
                n == 0 ? spec.external_values.size() : std::min(n, spec.external_values.size());
            out.mu.assign(spec.external_values.begin(),
                          spec.external_values.begin() + static_cast<std::ptrdiff_t>(take));
            break;
        }
    }
    return out;
}

double calibrate_noise_scale(std::span<const double> incomes, double snr_target) {
    if (incomes.empty()) throw Error(ErrorCode::invalid_input, "no incomes to calibrate against");
    if (!(snr_target > 0.0) || !std::isfinite(snr_target)) {
        throw Error(ErrorCode::invalid_input, "SNR target must be positive");
    }
    const double var = population_variance(incomes);
    if (!(var > 0.0)) throw Error(ErrorCode::invalid_input, "incomes have zero variance");
    // E[sigma^2] = sigma_c^2 (a^2 + ab + b^2) / 3 = sigma_c^2 * 3.25 / 3 for a = 1/2, b = 3/2.
    return std::sqrt(var * 3.0 / (snr_target * 3.25));
}

PolicyContext make_policy_context(std::span<const double> incomes, double budget_fraction) {
    if (incomes.empty()) throw Error(ErrorCode::invalid_input, "no incomes");
    if (!(budget_fraction > 0.0 && budget_fraction <= 1.0)) {
        throw Error(ErrorCode::invalid_config, "budget fraction must lie in (0, 1]");
    }
    std::vector<double> sorted(incomes.begin(), incomes.end());
    const std::size_t mid = (sorted.size() - 1) / 2;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid), sorted.end());
    const double z = sorted[mid];
    double gap = 0.0;
    for (double y : incomes) gap += std::max(0.0, z - y);
    if (!(gap > 0.0)) throw Error(ErrorCode::invalid_config, "total poverty gap is zero");
    return PolicyContext(z, budget_fraction * gap);
}

NoisyPanel generate_panel(std::span<const double> mu, double sigma_c, Rng& rng) {
    if (!(sigma_c > 0.0) || !std::isfinite(sigma_c)) {
        throw Error(ErrorCode::invalid_input, "sigma_c must be positive");
    }
    std::vector<double> est(mu.size());
    std::vector<double> sig(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (!(mu[i] >= 0.0)) throw Error(ErrorCode::invalid_input, "conditional means must be >= 0");
        sig[i] = rng.uniform(0.5 * sigma_c, 1.5 * sigma_c);
        est[i] = rng.normal(mu[i], sig[i]);
    }
    return NoisyPanel(std::move(est), std::move(sig));
}

std::size_t ExperimentResult::failures() const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const auto& r) { return !r.ok(); }));
}

std::size_t resolve_thread_count(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("TARGETING_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

ExperimentResult run_experiment(const SimConfig& requested) {
    validate_config(requested);
    ExperimentResult result;

    SimConfig config = requested;
    if (config.income.family == IncomeFamily::external) {
        // No known prior for real data, so the oracle is dropped rather than failed.
        const auto removed = std::erase_if(config.rules, [](const RuleSpec& r) {
            return r.kind == RuleKind::oracle_bayes;
        });
        if (removed > 0) {
            result.notes.push_back("oracle_bayes skipped: external incomes have no known prior");
        }
        if (config.rules.empty()) throw Error(ErrorCode::invalid_config, "no runnable rules");
    }
    if (config.income_noise_sd == 0.0) {
        result.notes.push_back("realized incomes equal conditional means (income_noise_sd = 0)");
    }

    // Fixed population, shared by all levels unless mu is redrawn.
    Population fixed;
    std::optional<DiscretePrior> generative;
    {
        Rng income_rng = Rng::derive(config.seed, {kIncomeStream});
        Rng eps_rng = Rng::derive(config.seed, {kEpsilonStream});
        SyntheticIncomes draw = synthetic_income_generator(config.income, config.n, income_rng);
        generative = draw.generative_prior;
        if (!config.redraw_mu) fixed = realize(config, std::move(draw), eps_rng);
    }

    for (double snr : config.snr_levels) {
        LevelSetup level{snr, 0.0, 0.0, 0.0};
        if (config.redraw_mu) {
            const DiscretePrior& g = *generative;
            const double var = prior_variance(g);
            if (!(var > 0.0)) throw Error(ErrorCode::invalid_config, "prior has zero variance");
            level.sigma_c = std::sqrt(var * 3.0 / (snr * 3.25));
            level.poverty_line = config.poverty_line.value_or(prior_lower_median(g));
            const double gap = prior_expected_gap(g, level.poverty_line);
            if (!(gap > 0.0)) throw Error(ErrorCode::invalid_config, "expected poverty gap is zero");
            level.budget = config.budget_fraction * static_cast<double>(config.n) * gap;
        } else {
            level.sigma_c = calibrate_noise_scale(fixed.y, snr);
            if (config.poverty_line) {
                const double z = *config.poverty_line;
                double gap = 0.0;
                for (double y : fixed.y) gap += std::max(0.0, z - y);
                if (!(gap > 0.0)) throw Error(ErrorCode::invalid_config, "total poverty gap is zero");
                level.poverty_line = z;
                level.budget = config.budget_fraction * gap;
            } else {
                const PolicyContext ctx = make_policy_context(fixed.y, config.budget_fraction);
                level.poverty_line = ctx.poverty_line;
                level.budget = ctx.budget;
            }
        }
        result.levels.push_back(level);
    }

    const std::size_t reps = config.replications;
    const std::size_t tasks = config.snr_levels.size() * reps;
    std::vector<std::vector<ReplicationRecord>> slots(tasks);
    std::atomic<std::size_t> next{0};
    std::exception_ptr fatal;
    std::atomic<bool> failed{false};

    auto worker = [&] {
        for (std::size_t t = next.fetch_add(1); t < tasks && !failed; t = next.fetch_add(1)) {
            const std::size_t li = t / reps;
            const std::size_t rep = t % reps;
            try {
                Rng rng = Rng::derive(config.seed, {kReplicationStream, li, rep});
                if (config.redraw_mu) {
                    Rng mu_rng = Rng::derive(config.seed, {kRedrawStream, li, rep});
                    SyntheticIncomes draw = synthetic_income_generator(config.income, config.n, mu_rng);
                    const Population pop = realize(config, std::move(draw), mu_rng);
                    slots[t] = run_replication(config, pop, result.levels[li], rep, rng);
                } else {
                    slots[t] = run_replication(config, fixed, result.levels[li], rep, rng);
                }
            } catch (...) {
                // Panel generation itself failed; nothing per-rule to record.
                if (!failed.exchange(true)) fatal = std::current_exception();
            }
        }
    };

    const std::size_t workers = std::min(resolve_thread_count(config.threads), tasks);
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (fatal) std::rethrow_exception(fatal);

    result.records.reserve(tasks * config.rules.size());
    std::size_t slack = 0;
    for (auto& slot : slots) {
        for (auto& rec : slot) {
            if (rec.ok() && rec.multiplier == 0.0 && rec.rule != RuleKind::ubi) ++slack;
            result.records.push_back(std::move(rec));
        }
    }
    if (slack > 0) {
        result.notes.push_back(std::to_string(slack) +
                               " allocations left budget unspent (estimated gaps below B)");
    }
    return result;
}

}  // namespace targeting
