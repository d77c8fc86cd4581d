#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace targeting {

// Portable random stream: mt19937_64 with hand-rolled uniform and normal
// transforms, so draws are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Independent child stream keyed by (seed, path...). Same key, same stream.
    static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi);
    double normal();
    double normal(double mean, double sd);
    std::uint64_t next_u64() { return engine_(); }

private:
    explicit Rng(std::seed_seq& seq);

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace targeting
