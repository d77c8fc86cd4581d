#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "targeting/error.hpp"
#include "targeting/io.hpp"

namespace targeting {

namespace {

double quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

}  // namespace

std::string render_boxplot_svg(const ExperimentResult& result, std::size_t level_index) {
    if (level_index >= result.levels.size()) {
        throw Error(ErrorCode::invalid_input, "no such SNR level");
    }
    const double snr = result.levels[level_index].snr;

    std::vector<RuleKind> order;
    std::vector<std::vector<double>> groups;
    for (const auto& r : result.records) {
        if (r.snr != snr || !r.ok()) continue;
        auto it = std::find(order.begin(), order.end(), r.rule);
        if (it == order.end()) {
            order.push_back(r.rule);
            groups.emplace_back();
            it = order.end() - 1;
        }
        groups[static_cast<std::size_t>(it - order.begin())].push_back(r.metrics.loss_ratio);
    }

    double lo = 0.0, hi = 1.0;
    for (auto& g : groups) {
        std::sort(g.begin(), g.end());
        lo = std::min(lo, g.front());
        hi = std::max(hi, g.back());
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    const double left = 70, top = 40, plot_h = 300, box_w = 40, step = 90;
    const double width = left + step * static_cast<double>(std::max<std::size_t>(order.size(), 1)) + 30;
    const double height = top + plot_h + 60;
    auto ypos = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
         num(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(left) + "\" y=\"20\">Loss ratio, SNR " + num(snr) + "</text>\n";
    s += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" +
         num(top + plot_h) + "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = lo + (hi - lo) * t / 4.0;
        s += "<text x=\"" + num(left - 6) + "\" y=\"" + num(ypos(v) + 4) +
             "\" text-anchor=\"end\">" + num(v) + "</text>\n";
    }
    for (double ref : {0.0, 1.0}) {
        s += "<line x1=\"" + num(left) + "\" y1=\"" + num(ypos(ref)) + "\" x2=\"" + num(width - 10) +
             "\" y2=\"" + num(ypos(ref)) + "\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>\n";
    }
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& g = groups[k];
        const double cx = left + step * (static_cast<double>(k) + 0.5);
        const double q1 = quantile(g, 0.25), q2 = quantile(g, 0.5), q3 = quantile(g, 0.75);
        s += "<line x1=\"" + num(cx) + "\" y1=\"" + num(ypos(g.back())) + "\" x2=\"" + num(cx) +
             "\" y2=\"" + num(ypos(g.front())) + "\" stroke=\"black\"/>\n";
        s += "<rect x=\"" + num(cx - box_w / 2) + "\" y=\"" + num(ypos(q3)) + "\" width=\"" +
             num(box_w) + "\" height=\"" + num(std::max(ypos(q1) - ypos(q3), 0.5)) +
             "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
        s += "<line x1=\"" + num(cx - box_w / 2) + "\" y1=\"" + num(ypos(q2)) + "\" x2=\"" +
             num(cx + box_w / 2) + "\" y2=\"" + num(ypos(q2)) + "\" stroke=\"black\" stroke-width=\"2\"/>\n";
        s += "<text x=\"" + num(cx) + "\" y=\"" + num(top + plot_h + 20) +
             "\" text-anchor=\"middle\">" + escape(rule_name(order[k])) + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

}  // namespace targeting
