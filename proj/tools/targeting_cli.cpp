// Command-line front end: allocate, simulate, fit-prior, evaluate.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "targeting/error.hpp"
#include "targeting/evaluation.hpp"
#include "targeting/io.hpp"
#include "targeting/rules.hpp"
#include "targeting/simulation.hpp"

namespace fs = std::filesystem;
using namespace targeting;

namespace {

// Error records in a simulation exit with 1, usage errors with 2, library
// errors with 10 + their code.
constexpr int kRecordFailures = 1;

int exit_code(ErrorCode code) { return 10 + static_cast<int>(code); }

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io_failure, "cannot write " + path.string());
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
    if (!out) throw Error(ErrorCode::io_failure, "write failed for " + path.string());
}

struct AllocateArgs {
    std::string panel;
    std::string rule = "plug_in";
    double z = 0.0;
    double budget = 0.0;
    std::optional<double> sigma;
    std::size_t grid_size = 0;
    std::string prior;
    std::string out;
};

int run_allocate(const AllocateArgs& a) {
    const PanelData data = ingest_panel(a.panel);
    const PolicyContext ctx(a.z, a.budget);
    RuleSpec spec;
    spec.kind = parse_rule_kind(a.rule);
    spec.pooled_sigma = a.sigma;
    spec.npmle.grid_size = a.grid_size;

    std::optional<DiscretePrior> prior;
    if (!a.prior.empty()) {
        std::ifstream in(a.prior);
        if (!in) throw Error(ErrorCode::io_failure, "cannot open " + a.prior);
        prior = read_prior(in);
    }
    std::span<const double> truth;
    if (data.y_true) truth = *data.y_true;
    const RuleInputs inputs{data.panel, truth, prior ? &*prior : nullptr, std::nullopt};
    const RuleOutput result = apply_rule(spec, inputs, ctx);

    std::ostringstream csv;
    write_transfers(csv, data.ids, result);
    if (a.out.empty()) {
        std::cout << csv.str();
    } else {
        write_text(a.out, csv.str());
    }
    if (result.meta.fitted_prior) {
        std::ostringstream p;
        write_prior(p, *result.meta.fitted_prior, data.panel.size());
        if (a.out.empty()) {
            std::cerr << "note: no --out given, fitted prior not written\n";
        } else {
            write_text(a.out + ".prior.csv", p.str());
        }
    }
    return 0;
}

struct SimulateArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool plots = false;
    std::string loss;
    bool timings = false;
};

int run_simulate(const SimulateArgs& a) {
    RunConfig cfg = load_config(a.config);
    if (a.seed) cfg.sim.seed = *a.seed;
    if (!a.out.empty()) cfg.output_dir = a.out;
    if (!a.loss.empty()) cfg.sim.loss = parse_loss_kind(a.loss);
    if (a.plots) cfg.plots = true;

    const ExperimentResult result = run_experiment(cfg.sim);
    fs::create_directories(cfg.output_dir);

    std::ostringstream csv;
    write_replications_csv(csv, result);
    write_text(cfg.output_dir / "replications.csv", csv.str());

    std::ostringstream json;
    write_summary_json(json, cfg.sim, result);
    write_text(cfg.output_dir / "summary.json", json.str());

    if (a.timings) {
        std::ostringstream t;
        write_timings_csv(t, result);
        write_text(cfg.output_dir / "timings.csv", t.str());
    }
    if (cfg.plots) {
        for (std::size_t i = 0; i < result.levels.size(); ++i) {
            write_text(cfg.output_dir / ("boxplot_snr_" + std::to_string(i) + ".svg"),
                       render_boxplot_svg(result, i));
        }
    }
    for (const auto& note : result.notes) std::cerr << "note: " << note << '\n';
    const std::size_t failures = result.failures();
    std::cerr << result.records.size() << " records written to " << cfg.output_dir.string()
              << ", " << failures << " failed\n";
    return failures == 0 ? 0 : kRecordFailures;
}

struct FitArgs {
    std::string panel;
    std::size_t grid_size = 0;
    std::string grid_kind = "uniform";
    double tol = 1e-9;
    int max_iter = 10000;
    std::string out;
};

int run_fit_prior(const FitArgs& a) {
    const PanelData data = ingest_panel(a.panel);
    NpmleConfig config;
    config.grid_size = a.grid_size;
    if (a.grid_kind == "uniform") {
        config.grid_kind = GridKind::uniform;
    } else if (a.grid_kind == "quantile") {
        config.grid_kind = GridKind::quantile;
    } else {
        throw Error(ErrorCode::invalid_config, "grid kind is uniform or quantile");
    }
    config.tol = a.tol;
    config.max_iter = a.max_iter;
    const NpmleFit fit = fit_npmle(data.panel, config);

    bool monotone = true;
    for (std::size_t k = 1; k < fit.trace.size(); ++k) {
        if (fit.trace[k] < fit.trace[k - 1]) monotone = false;
    }
    nlohmann::ordered_json diag;
    diag["n"] = data.panel.size();
    diag["grid_size"] = fit.prior.size();
    diag["iterations"] = fit.iterations;
    diag["converged"] = fit.converged;
    diag["log_likelihood"] = fit.log_likelihood;
    diag["stationarity_residual"] = fit.stationarity_residual;
    diag["trace_monotone"] = monotone;
    diag["effective_support"] = fit.prior.effective_support();
    diag["prior_mean"] = fit.prior.mean();

    std::ostringstream p;
    write_prior(p, fit, data.panel.size());
    if (a.out.empty()) {
        std::cout << p.str();
        std::cerr << diag.dump(2) << '\n';
    } else {
        write_text(a.out, p.str());
        write_text(a.out + ".diagnostics.json", diag.dump(2) + "\n");
    }
    return 0;
}

struct EvaluateArgs {
    std::string panel;
    std::string transfers;
    double z = 0.0;
    double budget = 0.0;
    std::string loss = "squared";
    std::string out;
};

int run_evaluate(const EvaluateArgs& a) {
    const PanelData data = ingest_panel(a.panel);
    if (!data.y_true) throw Error(ErrorCode::missing_column, a.panel + ": evaluate needs y_true");
    const TransfersFile tf = read_transfers(a.transfers);
    if (tf.ids != data.ids) {
        throw Error(ErrorCode::invalid_input, "transfer file households do not match the panel");
    }
    const PolicyContext ctx(a.z, a.budget);
    const Evaluator eval(*data.y_true, ctx, parse_loss_kind(a.loss));
    const MetricsReport m = eval.report(TransferVector(tf.transfers, a.budget));

    nlohmann::ordered_json j;
    j["loss_kind"] = a.loss;
    j["loss"] = m.loss;
    j["loss_ratio"] = m.loss_ratio;
    j["inclusion_error"] = m.inclusion_error;
    j["exclusion_error"] = m.exclusion_error;
    j["reach"] = m.reach;
    j["avg_transfer_given_positive"] = m.avg_transfer_given_positive;
    j["spend"] = m.spend;
    j["no_recipients"] = m.no_recipients;
    if (a.out.empty()) {
        std::cout << j.dump(2) << '\n';
    } else {
        write_text(a.out, j.dump(2) + "\n");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Budget-constrained transfer targeting with noisy income estimates"};
    app.require_subcommand(1);

    AllocateArgs alloc;
    auto* allocate = app.add_subcommand("allocate", "allocate a budget over a panel file");
    allocate->add_option("--panel", alloc.panel, "panel CSV")->required()->check(CLI::ExistingFile);
    allocate->add_option("--rule", alloc.rule, "plug_in, james_stein, eb_npmle, eb_truncnorm, "
                                               "oracle_bayes, full_info, ubi");
    allocate->add_option("-z,--poverty-line", alloc.z, "poverty line")->required();
    allocate->add_option("-B,--budget", alloc.budget, "total budget")->required();
    allocate->add_option("--sigma", alloc.sigma, "pooled noise scale for james_stein/eb_truncnorm");
    allocate->add_option("--grid-size", alloc.grid_size, "NPMLE grid size (0 = default)");
    allocate->add_option("--prior", alloc.prior, "prior file for oracle_bayes");
    allocate->add_option("--out", alloc.out, "transfers CSV (stdout if omitted)");

    SimulateArgs sim;
    std::uint64_t seed = 0;
    auto* simulate = app.add_subcommand("simulate", "run a replication experiment");
    simulate->add_option("--config", sim.config, "experiment config")->required()->check(CLI::ExistingFile);
    auto* seed_opt = simulate->add_option("--seed", seed, "override the config seed");
    simulate->add_option("--out", sim.out, "output directory (overrides output_dir)");
    simulate->add_flag("--plots", sim.plots, "write SVG boxplots per SNR level");
    simulate->add_option("--loss", sim.loss, "squared or one-sided")
        ->check(CLI::IsMember({"squared", "one-sided"}));
    simulate->add_flag("--timings", sim.timings, "also write per-record runtimes");

    FitArgs fit;
    auto* fit_prior = app.add_subcommand("fit-prior", "fit the NPMLE prior to a panel");
    fit_prior->add_option("--panel", fit.panel, "panel CSV")->required()->check(CLI::ExistingFile);
    fit_prior->add_option("--grid-size", fit.grid_size, "grid points (0 = default)");
    fit_prior->add_option("--grid-kind", fit.grid_kind, "uniform or quantile");
    fit_prior->add_option("--tol", fit.tol, "EM tolerance on the average log-likelihood");
    fit_prior->add_option("--max-iter", fit.max_iter, "EM iteration cap");
    fit_prior->add_option("--out", fit.out, "prior file; diagnostics go to <out>.diagnostics.json");

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "score a transfers file against true incomes");
    evaluate->add_option("--panel", ev.panel, "panel CSV with y_true")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--transfers", ev.transfers, "transfers CSV")->required()->check(CLI::ExistingFile);
    evaluate->add_option("-z,--poverty-line", ev.z, "poverty line")->required();
    evaluate->add_option("-B,--budget", ev.budget, "total budget")->required();
    evaluate->add_option("--loss", ev.loss, "squared or one-sided")
        ->check(CLI::IsMember({"squared", "one-sided"}));
    evaluate->add_option("--out", ev.out, "metrics JSON (stdout if omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*allocate) return run_allocate(alloc);
        if (*simulate) {
            if (*seed_opt) sim.seed = seed;
            return run_simulate(sim);
        }
        if (*fit_prior) return run_fit_prior(fit);
        if (*evaluate) return run_evaluate(ev);
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(ErrorCode::io_failure);
    }
    return 2;
}
