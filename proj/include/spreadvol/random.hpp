#pragma once

#include <cstdint>
#include <random>

namespace spreadvol {

/// Seedable generator with independent substreams keyed by (seed, stream).
/// Draw order is fixed, so a given (seed, stream) always yields the same
/// sequence regardless of which worker consumes it.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : engine_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

    /// Generator for path `index` of a run seeded with `seed`.
    static Rng substream(std::uint64_t seed, std::uint64_t index) { return Rng(seed, index + 1); }

    double normal() { return normal_(engine_); }
    double normal(double mean, double stddev) { return mean + stddev * normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    // splitmix64 finalizer
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace spreadvol
