#pragma once

#include <cmath>
#include <cstdint>

namespace roadlstm {

// Deterministic 64-bit generator (splitmix64). The update is fixed by these
// equations and nothing else, so the integer stream is bit-identical across
// runs and platforms for a given seed:
//
//   state <- state + 0x9E3779B97F4A7C15
//   z <- state
//   z <- (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9
//   z <- (z XOR (z >> 27)) * 0x94D049BB133111EB
//   output <- z XOR (z >> 31)
//
// uniform() maps the top 53 bits to [0,1). gaussian() is Box-Muller on two
// uniform draws (the second variate of each pair is cached, so gaussian draws
// consume the underlying stream in pairs).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t seed_state() const { return state_; }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + next_double() * (hi - lo);
    }

    // Standard Box-Muller transform; u1 is kept in (0,1] so log is finite.
    double gaussian(double mean, double sd) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + sd * spare_;
        }
        double u1 = 1.0 - next_double();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return mean + sd * r * std::cos(theta);
    }

    // Uniform integer in [0, n). n must be positive. Uses the modulo map,
    // whose bias is negligible for the n used here (dataset permutations).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// splitmix64 finalizer, usable as a standalone mixing function for deriving
// independent child seeds (e.g. one per scene or per worker).
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace roadlstm
