#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mde {

// Deterministic RNG with explicitly-coded distributions. std:: distribution
// objects are implementation-defined, so uniform/normal draws are derived
// from raw engine output here to keep runs reproducible across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] via rejection-free Lemire-style reduction;
    // bias is negligible for the tiny ranges used here.
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(engine_() % span);
    }

    // Standard normal via Box-Muller with a cached spare.
    double normal();

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Stable sub-stream derivation: hash of (seed, tag) so independent phases
// (init, batching, noise draws) never share a stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

}  // namespace mde
