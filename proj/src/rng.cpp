#include "targeting/rng.hpp"

#include <cmath>
#include <vector>

namespace targeting {

namespace {

std::vector<std::uint32_t> split_words(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * path.size());
    words.push_back(static_cast<std::uint32_t>(seed));
    words.push_back(static_cast<std::uint32_t>(seed >> 32));
    for (std::uint64_t p : path) {
        words.push_back(static_cast<std::uint32_t>(p));
        words.push_back(static_cast<std::uint32_t>(p >> 32));
    }
    return words;
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
    const auto words = split_words(seed, {});
    std::seed_seq seq(words.begin(), words.end());
    engine_.seed(seq);
}

Rng::Rng(std::seed_seq& seq) { engine_.seed(seq); }

Rng Rng::derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    const auto words = split_words(seed, path);
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

// Marsaglia polar method.
double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
}

double Rng::normal(double mean, double sd) { return mean + sd * normal(); }

}  // namespace targeting
