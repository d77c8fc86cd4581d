#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "targeting/prior.hpp"
#include "targeting/rules.hpp"
#include "targeting/simulation.hpp"

namespace targeting {

struct PanelData {
    std::vector<std::string> ids;
    NoisyPanel panel;
    std::optional<std::vector<double>> y_true;
};

// CSV with columns household_id, y_hat, sigma and optionally y_true, in any
// order. Errors carry empty_file, missing_column, malformed_numeric,
// nonpositive_sigma or duplicate_id codes and name the offending line.
PanelData read_panel(std::istream& in, const std::string& source = "<stream>");
PanelData ingest_panel(const std::filesystem::path& path);

void write_panel(std::ostream& out, const PanelData& data);
void write_panel(const std::filesystem::path& path, const PanelData& data);

// household_id,transfer rows followed by '#' lines carrying the multiplier and spend.
void write_transfers(std::ostream& out, const std::vector<std::string>& ids,
                     const RuleOutput& result);

struct TransfersFile {
    std::vector<std::string> ids;
    std::vector<double> transfers;
};
TransfersFile read_transfers(const std::filesystem::path& path);

struct PriorFileHeader {
    std::size_t n = 0;
    double grid_lo = 0.0;
    double grid_hi = 0.0;
    int iterations = 0;
    double log_likelihood = 0.0;
};

// One '#' header line, then support,weight rows.
void write_prior(std::ostream& out, const NpmleFit& fit, std::size_t n);
DiscretePrior read_prior(std::istream& in, PriorFileHeader* header = nullptr);

struct RunConfig {
    SimConfig sim;
    std::filesystem::path output_dir = "out";
    bool plots = false;
};

// Flat key = value file; '#' starts a comment. Errors name file and line.
RunConfig parse_config(std::istream& in, const std::string& source = "<stream>",
                       const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

// One row per record. Runtime is left out so reruns are byte-identical.
void write_replications_csv(std::ostream& out, const ExperimentResult& result);
void write_timings_csv(std::ostream& out, const ExperimentResult& result);
void write_summary_json(std::ostream& out, const SimConfig& config, const ExperimentResult& result);

// Boxplots of loss ratios by rule for one SNR level.
std::string render_boxplot_svg(const ExperimentResult& result, std::size_t level_index);

// %.17g
std::string format_double(double v);

}  // namespace targeting
