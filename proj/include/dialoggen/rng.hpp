#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace dialoggen {

/// Deterministic, implementation-independent PRNG (xorshift-style splitmix64
/// stream). Distribution helpers are hand-rolled so sequences do not depend
/// on the standard library's <random> internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        if (lo > hi) {
            throw std::invalid_argument("uniform_int: empty range");
        }
        const std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
        // Rejection sampling keeps the draw exactly uniform.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t draw;
        do {
            draw = next();
        } while (draw >= limit);
        return lo + static_cast<int>(draw % span);
    }

    /// Uniform in [0, 1).
    double uniform_real() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    bool coin() { return (next() & 1u) != 0; }

    /// Weighted index draw over `weights` (all > 0). Entries with weight 0
    /// are treated as excluded.
    int weighted_index(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) {
            total += w;
        }
        if (total <= 0.0) {
            throw std::invalid_argument("weighted_index: no positive weights");
        }
        double point = uniform_real() * total;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            point -= weights[i];
            if (point < 0.0 && weights[i] > 0.0) {
                return static_cast<int>(i);
            }
        }
        for (std::size_t i = weights.size(); i-- > 0;) {
            if (weights[i] > 0.0) {
                return static_cast<int>(i);
            }
        }
        return 0;
    }

private:
    std::uint64_t state_;
};

/// Derives an independent per-instance stream from the run seed.
inline std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t index) {
    Rng mix(run_seed ^ (0xA24BAED4963EE407ULL + index * 0x9FB21C651E98DF25ULL));
    return mix.next();
}

}  // namespace dialoggen
