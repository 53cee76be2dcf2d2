#pragma once

#include <cstdint>
#include <random>

namespace snn {

// Seeded random source. One instance per trial; never shared across threads.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::mt19937_64& engine() { return engine_; }
    std::uint64_t seed() const { return seed_; }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    double normal(double mean, double stddev) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    bool coin() {
        return std::bernoulli_distribution(0.5)(engine_);
    }

    bool bernoulli(double p) {
        return std::bernoulli_distribution(p)(engine_);
    }

    // Derive an independent per-trial seed from a master seed (splitmix64 step).
    static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
        std::uint64_t z = master + (index + 1) * 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

} // namespace snn
