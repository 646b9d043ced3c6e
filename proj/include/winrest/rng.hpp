// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace winrest {

/// splitmix64 step; used to expand seeds into full RNG state.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// xoshiro256** with explicit, serializable state. We use our own generator
/// (and our own normal sampler below) instead of <random> so that streams are
/// identical across standard library implementations and can round-trip
/// through checkpoints bit-exactly.
class Rng {
public:
    using State = std::array<std::uint64_t, 4>;

    Rng() : Rng(0x5eed) {}

    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    /// Stream derived from several seed words. Used for the per-item
    /// contract: rng = derive(global_seed, item_id, epoch).
    static Rng derive(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
        std::uint64_t sm = a;
        std::uint64_t mixed = splitmix64(sm);
        sm ^= b * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL;
        mixed ^= splitmix64(sm);
        sm ^= c * 0xda942042e4dd58b5ULL + 0x452821e638d01377ULL;
        mixed ^= splitmix64(sm);
        return Rng(mixed);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n) {
        // Rejection sampling to avoid modulo bias.
        const std::uint64_t limit = ~std::uint64_t(0) - (~std::uint64_t(0) % n);
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller. Draws two uniforms per sample so the
    /// generator carries no hidden cache state.
    double normal() {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    /// Normal truncated to [-bound_sigmas, bound_sigmas] standard deviations,
    /// scaled by stddev (resampling).
    double truncated_normal(double stddev, double bound_sigmas = 2.0) {
        double z;
        do {
            z = normal();
        } while (std::abs(z) > bound_sigmas);
        return z * stddev;
    }

    const State& state() const { return state_; }
    void set_state(const State& s) { state_ = s; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    State state_{};
};

}  // namespace winrest
