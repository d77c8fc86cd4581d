#include "targeting/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "targeting/error.hpp"

namespace targeting {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string unquote(std::string_view s) {
    s = trim(s);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        std::string out;
        for (std::size_t i = 1; i + 1 < s.size(); ++i) {
            if (s[i] == '"' && i + 2 < s.size() && s[i + 1] == '"') ++i;
            out.push_back(s[i]);
        }
        return out;
    }
    return std::string(s);
}

// Splits one CSV line; quoted fields may contain commas.
std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (c == '"') {
            quoted = !quoted;
            cur.push_back(c);
        } else if (c == ',' && !quoted) {
            fields.push_back(unquote(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(unquote(cur));
    return fields;
}

std::vector<std::string_view> split_list(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    Int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::string where(const std::string& source, std::size_t line) {
    return source + ":" + std::to_string(line) + ": ";
}

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c == '\n' ? ' ' : c);
    }
    out.push_back('"');
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_failure, "cannot open " + path.string());
    return in;
}

}  // namespace

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

PanelData read_panel(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        header = split_csv(line);
        break;
    }
    if (header.empty()) throw Error(ErrorCode::empty_file, source + ": file is empty");

    auto column = [&](std::string_view name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        return std::nullopt;
    };
    const auto id_col = column("household_id");
    const auto y_col = column("y_hat");
    const auto s_col = column("sigma");
    const auto t_col = column("y_true");
    for (auto [col, name] : {std::pair{id_col, "household_id"}, std::pair{y_col, "y_hat"},
                             std::pair{s_col, "sigma"}}) {
        if (!col) {
            throw Error(ErrorCode::missing_column,
                        where(source, lineno) + "missing column '" + name + "'");
        }
    }

    std::vector<std::string> ids;
    std::vector<double> est, sig, truth;
    std::unordered_set<std::string> seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != header.size()) {
            throw Error(ErrorCode::malformed_numeric,
                        where(source, lineno) + "expected " + std::to_string(header.size()) +
                            " fields, found " + std::to_string(fields.size()));
        }
        auto number = [&](std::size_t col, const char* name) {
            const auto v = parse_double(fields[col]);
            if (!v || !std::isfinite(*v)) {
                throw Error(ErrorCode::malformed_numeric, where(source, lineno) + "bad " + name +
                                                              " value '" + fields[col] + "'");
            }
            return *v;
        };
        const std::string& id = fields[*id_col];
        if (!seen.insert(id).second) {
            throw Error(ErrorCode::duplicate_id,
                        where(source, lineno) + "duplicate household_id '" + id + "'");
        }
        const double y = number(*y_col, "y_hat");
        const double s = number(*s_col, "sigma");
        if (!(s > 0.0)) {
            throw Error(ErrorCode::nonpositive_sigma,
                        where(source, lineno) + "sigma must be positive (household '" + id + "')");
        }
        ids.push_back(id);
        est.push_back(y);
        sig.push_back(s);
        if (t_col) truth.push_back(number(*t_col, "y_true"));
    }
    if (ids.empty()) throw Error(ErrorCode::empty_file, source + ": no data rows");

    PanelData data{std::move(ids), NoisyPanel(std::move(est), std::move(sig)), std::nullopt};
    if (t_col) data.y_true = std::move(truth);
    return data;
}

PanelData ingest_panel(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_panel(in, path.string());
}

void write_panel(std::ostream& out, const PanelData& data) {
    out << "household_id,y_hat,sigma" << (data.y_true ? ",y_true" : "") << '\n';
    for (std::size_t i = 0; i < data.ids.size(); ++i) {
        out << csv_field(data.ids[i]) << ',' << format_double(data.panel.estimates()[i]) << ','
            << format_double(data.panel.noise_scales()[i]);
        if (data.y_true) out << ',' << format_double((*data.y_true)[i]);
        out << '\n';
    }
}

void write_panel(const std::filesystem::path& path, const PanelData& data) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::io_failure, "cannot write " + path.string());
    write_panel(out, data);
}

void write_transfers(std::ostream& out, const std::vector<std::string>& ids,
                     const RuleOutput& result) {
    if (ids.size() != result.transfers.size()) {
        throw Error(ErrorCode::invalid_input, "id and transfer counts differ");
    }
    out << "household_id,transfer\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out << csv_field(ids[i]) << ',' << format_double(result.transfers[i]) << '\n';
    }
    out << "# multiplier=" << format_double(result.meta.multiplier) << '\n';
    out << "# spend=" << format_double(result.meta.spend) << '\n';
    if (result.meta.shrink_factor != 1.0) {
        out << "# shrink_factor=" << format_double(result.meta.shrink_factor) << '\n';
    }
}

TransfersFile read_transfers(const std::filesystem::path& path) {
    auto in = open_in(path);
    const std::string source = path.string();
    std::string line;
    std::size_t lineno = 0;
    TransfersFile out;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto fields = split_csv(line);
        if (!header) {
            if (fields.size() != 2 || fields[0] != "household_id" || fields[1] != "transfer") {
                throw Error(ErrorCode::missing_column,
                            where(source, lineno) + "expected header household_id,transfer");
            }
            header = true;
            continue;
        }
        const auto v = fields.size() == 2 ? parse_double(fields[1]) : std::nullopt;
        if (!v) throw Error(ErrorCode::malformed_numeric, where(source, lineno) + "bad transfer row");
        out.ids.push_back(fields[0]);
        out.transfers.push_back(*v);
    }
    if (!header) throw Error(ErrorCode::empty_file, source + ": file is empty");
    return out;
}

void write_prior(std::ostream& out, const NpmleFit& fit, std::size_t n) {
    const auto& s = fit.prior.support();
    out << "# n=" << n << " grid_lo=" << format_double(s.front())
        << " grid_hi=" << format_double(s.back()) << " iterations=" << fit.iterations
        << " log_likelihood=" << format_double(fit.log_likelihood) << '\n';
    out << "support,weight\n";
    for (std::size_t k = 0; k < s.size(); ++k) {
        out << format_double(s[k]) << ',' << format_double(fit.prior.weights()[k]) << '\n';
    }
}

DiscretePrior read_prior(std::istream& in, PriorFileHeader* header) {
    std::string line;
    std::size_t lineno = 0;
    std::vector<double> support, weights;
    bool saw_columns = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '#') {
            if (header == nullptr) continue;
            std::istringstream fields{std::string(t.substr(1))};
            std::string kv;
            while (fields >> kv) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = kv.substr(0, eq);
                const std::string val = kv.substr(eq + 1);
                if (key == "n") header->n = parse_int<std::size_t>(val).value_or(0);
                if (key == "grid_lo") header->grid_lo = parse_double(val).value_or(0.0);
                if (key == "grid_hi") header->grid_hi = parse_double(val).value_or(0.0);
                if (key == "iterations") header->iterations = parse_int<int>(val).value_or(0);
                if (key == "log_likelihood") header->log_likelihood = parse_double(val).value_or(0.0);
            }
            continue;
        }
        if (!saw_columns) {
            if (t != "support,weight") {
                throw Error(ErrorCode::missing_column, "line " + std::to_string(lineno) +
                                                           ": expected header support,weight");
            }
            saw_columns = true;
            continue;
        }
        const auto fields = split_csv(line);
        const auto s = fields.size() == 2 ? parse_double(fields[0]) : std::nullopt;
        const auto w = fields.size() == 2 ? parse_double(fields[1]) : std::nullopt;
        if (!s || !w) {
            throw Error(ErrorCode::malformed_numeric, "line " + std::to_string(lineno) + ": bad row");
        }
        support.push_back(*s);
        weights.push_back(*w);
    }
    if (support.empty()) throw Error(ErrorCode::empty_file, "prior file has no rows");
    return DiscretePrior(std::move(support), std::move(weights));
}

RunConfig parse_config(std::istream& in, const std::string& source,
                       const std::filesystem::path& base_dir) {
    RunConfig cfg;
    SimConfig& sim = cfg.sim;
    std::map<std::string, std::pair<std::string, std::size_t>> rule_options;
    std::vector<std::pair<std::string, std::size_t>> rule_names;
    std::set<std::string> seen;
    std::optional<std::pair<std::string, std::size_t>> income_file;

    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view body = line;
        if (const auto hash = body.find('#'); hash != std::string_view::npos) {
            body = body.substr(0, hash);
        }
        body = trim(body);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        auto fail = [&](const std::string& msg) -> Error {
            return Error(ErrorCode::invalid_config, where(source, lineno) + msg);
        };
        if (eq == std::string_view::npos) throw fail("expected key = value");
        const std::string key(trim(body.substr(0, eq)));
        const std::string_view value = trim(body.substr(eq + 1));
        if (key.empty()) throw fail("empty key");
        if (!seen.insert(key).second) throw fail("duplicate key '" + key + "'");

        auto real = [&]() {
            const auto v = parse_double(value);
            if (!v || !std::isfinite(*v)) throw fail("'" + key + "' needs a number");
            return *v;
        };
        auto count = [&]() {
            const auto v = parse_int<std::size_t>(value);
            if (!v) throw fail("'" + key + "' needs a nonnegative integer");
            return *v;
        };
        auto boolean = [&]() {
            if (value == "true" || value == "1" || value == "yes") return true;
            if (value == "false" || value == "0" || value == "no") return false;
            throw fail("'" + key + "' needs true or false");
        };

        try {
            if (key == "n") {
                sim.n = count();
            } else if (key == "snr" || key == "snr_levels") {
                sim.snr_levels.clear();
                for (auto part : split_list(value, ',')) {
                    const auto v = parse_double(part);
                    if (!v || !(*v > 0.0) || !std::isfinite(*v)) {
                        throw fail("SNR levels must be positive numbers");
                    }
                    sim.snr_levels.push_back(*v);
                }
            } else if (key == "replications") {
                sim.replications = count();
                if (sim.replications < 1) throw fail("replications must be >= 1");
            } else if (key == "seed") {
                const auto v = parse_int<std::uint64_t>(value);
                if (!v) throw fail("seed must be a 64-bit unsigned integer");
                sim.seed = *v;
            } else if (key == "budget_fraction") {
                sim.budget_fraction = real();
                if (!(sim.budget_fraction > 0.0 && sim.budget_fraction <= 1.0)) {
                    throw fail("budget_fraction must lie in (0, 1]");
                }
            } else if (key == "rules") {
                for (auto part : split_list(value, ',')) rule_names.emplace_back(part, lineno);
            } else if (key.rfind("rule.", 0) == 0) {
                rule_options[key] = {std::string(value), lineno};
            } else if (key == "income.family") {
                sim.income.family = parse_income_family(value);
            } else if (key == "income.meanlog") {
                sim.income.meanlog = real();
            } else if (key == "income.sdlog") {
                sim.income.sdlog = real();
            } else if (key == "income.low") {
                sim.income.low = real();
            } else if (key == "income.high") {
                sim.income.high = real();
            } else if (key == "income.p_low") {
                sim.income.p_low = real();
            } else if (key == "income.components") {
                sim.income.components.clear();
                for (auto part : split_list(value, ',')) {
                    const auto bits = split_list(part, ':');
                    const auto w = bits.size() == 3 ? parse_double(bits[0]) : std::nullopt;
                    const auto m = bits.size() == 3 ? parse_double(bits[1]) : std::nullopt;
                    const auto s = bits.size() == 3 ? parse_double(bits[2]) : std::nullopt;
                    if (!w || !m || !s) throw fail("components are weight:mean:sd separated by commas");
                    sim.income.components.push_back({*w, *m, *s});
                }
            } else if (key == "income.file") {
                income_file = std::pair{std::string(value), lineno};
            } else if (key == "loss") {
                sim.loss = parse_loss_kind(value);
            } else if (key == "income_noise_sd") {
                sim.income_noise_sd = real();
                if (sim.income_noise_sd < 0.0) throw fail("income_noise_sd must be >= 0");
            } else if (key == "redraw_mu") {
                sim.redraw_mu = boolean();
            } else if (key == "poverty_line") {
                sim.poverty_line = real();
            } else if (key == "threads") {
                sim.threads = count();
            } else if (key == "output_dir") {
                cfg.output_dir = std::string(value);
            } else if (key == "plots") {
                cfg.plots = boolean();
            } else {
                throw fail("unknown key '" + key + "'");
            }
        } catch (const Error& e) {
            if (std::string_view(e.what()).rfind(source + ":", 0) == 0) throw;
            throw fail(e.what());
        }
    }

    std::set<RuleKind> listed;
    for (const auto& [name, at] : rule_names) {
        RuleSpec spec;
        try {
            spec.kind = parse_rule_kind(name);
        } catch (const Error& e) {
            throw Error(ErrorCode::invalid_config, where(source, at) + e.what());
        }
        if (!listed.insert(spec.kind).second) {
            throw Error(ErrorCode::invalid_config, where(source, at) + "rule '" + name + "' listed twice");
        }
        sim.rules.push_back(spec);
    }
    for (const auto& [key, entry] : rule_options) {
        const auto& [value, at] = entry;
        auto fail = [&, at = at](const std::string& msg) {
            return Error(ErrorCode::invalid_config, where(source, at) + msg);
        };
        const auto dot = key.find('.', 5);
        if (dot == std::string::npos) throw fail("rule options look like rule.<name>.<option>");
        RuleKind kind;
        try {
            kind = parse_rule_kind(key.substr(5, dot - 5));
        } catch (const Error& e) {
            throw fail(e.what());
        }
        auto it = std::find_if(sim.rules.begin(), sim.rules.end(),
                               [&](const RuleSpec& r) { return r.kind == kind; });
        if (it == sim.rules.end()) throw fail("option for a rule not listed in 'rules'");
        const std::string option = key.substr(dot + 1);
        if (option == "sigma" &&
            (kind == RuleKind::james_stein || kind == RuleKind::eb_truncnorm)) {
            const auto v = parse_double(value);
            if (!v || !(*v > 0.0)) throw fail("sigma must be positive");
            it->pooled_sigma = *v;
        } else if (kind == RuleKind::eb_npmle && option == "grid_size") {
            const auto v = parse_int<std::size_t>(value);
            if (!v) throw fail("grid_size must be a nonnegative integer");
            it->npmle.grid_size = *v;
        } else if (kind == RuleKind::eb_npmle && option == "grid_kind") {
            if (value == "uniform") it->npmle.grid_kind = GridKind::uniform;
            else if (value == "quantile") it->npmle.grid_kind = GridKind::quantile;
            else throw fail("grid_kind is uniform or quantile");
        } else if (kind == RuleKind::eb_npmle && option == "tol") {
            const auto v = parse_double(value);
            if (!v || !(*v > 0.0)) throw fail("tol must be positive");
            it->npmle.tol = *v;
        } else if (kind == RuleKind::eb_npmle && option == "max_iter") {
            const auto v = parse_int<int>(value);
            if (!v || *v < 1) throw fail("max_iter must be a positive integer");
            it->npmle.max_iter = *v;
        } else {
            throw fail("unknown option '" + option + "' for rule " + std::string(rule_name(kind)));
        }
    }
    for (auto& r : sim.rules) {
        // Simulations never read the trace; skip storing it.
        if (r.kind == RuleKind::eb_npmle) r.npmle.keep_trace = false;
    }

    if (income_file) {
        if (sim.income.family != IncomeFamily::external) {
            throw Error(ErrorCode::invalid_config,
                        where(source, income_file->second) + "income.file needs income.family = external");
        }
        std::filesystem::path p = income_file->first;
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        const PanelData data = ingest_panel(p);
        if (!data.y_true) {
            throw Error(ErrorCode::missing_column,
                        where(source, income_file->second) + p.string() + " has no y_true column");
        }
        sim.income.external_values = *data.y_true;
        sim.income.external_path = income_file->first;
        if (!seen.count("n")) sim.n = sim.income.external_values.size();
    } else if (sim.income.family == IncomeFamily::external) {
        throw Error(ErrorCode::invalid_config, source + ": income.family = external needs income.file");
    }
    if (sim.rules.empty()) throw Error(ErrorCode::invalid_config, source + ": no rules listed");
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    auto in = open_in(path);
    return parse_config(in, path.string(), path.parent_path());
}

void write_replications_csv(std::ostream& out, const ExperimentResult& result) {
    out << "snr,replication,rule,loss,loss_ratio,inclusion_error,exclusion_error,reach,"
           "avg_transfer_given_positive,spend,multiplier,active_count,shrink_factor,"
           "no_recipients,error\n";
    for (const auto& r : result.records) {
        out << format_double(r.snr) << ',' << r.replication << ',' << rule_name(r.rule) << ',';
        if (r.ok()) {
            const auto& m = r.metrics;
            out << format_double(m.loss) << ',' << format_double(m.loss_ratio) << ','
                << format_double(m.inclusion_error) << ',' << format_double(m.exclusion_error)
                << ',' << format_double(m.reach) << ','
                << format_double(m.avg_transfer_given_positive) << ',' << format_double(m.spend)
                << ',' << format_double(r.multiplier) << ',' << r.active_count << ','
                << format_double(r.shrink_factor) << ',' << (m.no_recipients ? 1 : 0) << ',';
        } else {
            out << ",,,,,,,,,,,";
        }
        out << csv_field(r.error) << '\n';
    }
}

void write_timings_csv(std::ostream& out, const ExperimentResult& result) {
    out << "snr,replication,rule,runtime_seconds\n";
    for (const auto& r : result.records) {
        out << format_double(r.snr) << ',' << r.replication << ',' << rule_name(r.rule) << ','
            << format_double(r.runtime_seconds) << '\n';
    }
}

namespace {

nlohmann::ordered_json describe(const std::vector<double>& v) {
    nlohmann::ordered_json j;
    if (v.empty()) {
        j["mean"] = nullptr;
        j["min"] = nullptr;
        j["sd"] = nullptr;
        return j;
    }
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    j["mean"] = mean;
    j["min"] = *std::min_element(v.begin(), v.end());
    if (v.size() < 2) {
        j["sd"] = nullptr;
    } else {
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        j["sd"] = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return j;
}

}  // namespace

void write_summary_json(std::ostream& out, const SimConfig& config, const ExperimentResult& result) {
    using nlohmann::ordered_json;
    ordered_json j;
    ordered_json c;
    c["n"] = config.n;
    c["replications"] = config.replications;
    c["seed"] = config.seed;
    c["budget_fraction"] = config.budget_fraction;
    c["loss"] = std::string(loss_name(config.loss));
    c["income_family"] = std::string(income_family_name(config.income.family));
    if (!config.income.external_path.empty()) c["income_file"] = config.income.external_path;
    c["income_noise_sd"] = config.income_noise_sd;
    c["redraw_mu"] = config.redraw_mu;
    j["config"] = c;
    j["notes"] = result.notes;
    j["failures"] = result.failures();

    ordered_json levels = ordered_json::array();
    for (const auto& level : result.levels) {
        ordered_json l;
        l["snr"] = level.snr;
        l["sigma_c"] = level.sigma_c;
        l["poverty_line"] = level.poverty_line;
        l["budget"] = level.budget;
        ordered_json rules;
        for (const auto& spec : config.rules) {
            std::vector<double> loss, ratio, incl, excl, reach, spend;
            std::size_t failures = 0;
            bool present = false;
            for (const auto& r : result.records) {
                if (r.snr != level.snr || r.rule != spec.kind) continue;
                present = true;
                if (!r.ok()) {
                    ++failures;
                    continue;
                }
                loss.push_back(r.metrics.loss);
                ratio.push_back(r.metrics.loss_ratio);
                incl.push_back(r.metrics.inclusion_error);
                excl.push_back(r.metrics.exclusion_error);
                reach.push_back(r.metrics.reach);
                spend.push_back(r.metrics.spend);
            }
            if (!present) continue;
            ordered_json rj;
            rj["ok"] = loss.size();
            rj["failures"] = failures;
            rj["loss"] = describe(loss);
            rj["loss_ratio"] = describe(ratio);
            rj["inclusion_error"] = describe(incl);
            rj["exclusion_error"] = describe(excl);
            rj["reach"] = describe(reach);
            rj["spend"] = describe(spend);
            rules[std::string(rule_name(spec.kind))] = rj;
        }
        l["rules"] = rules;
        levels.push_back(l);
    }
    j["levels"] = levels;
    out << j.dump(2) << '\n';
}

}  // namespace targeting
