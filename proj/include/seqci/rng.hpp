// Seeded PRNG for deterministic simulation.
//
// Core generator is xoshiro256** seeded through SplitMix64. Independent
// sub-streams are derived with split(stream_id): the child is reseeded from
// a SplitMix64 mix of the parent seed and the stream id, so the stream tree
// is a pure function of (root seed, path of ids) and is independent of
// call ordering or thread scheduling.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace seqci {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        std::uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
    }

    // Child stream: deterministic in (this->seed(), stream_id) only.
    Rng split(std::uint64_t stream_id) const {
        std::uint64_t m = stream_id + 0x9E3779B97F4A7C15ULL;
        m = splitmix64(m);
        return Rng(seed_ ^ m);
    }

    std::uint64_t seed() const { return seed_; }

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

    // Uniform double in [0, 1), 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    // Standard normal via Marsaglia polar; second value of each pair cached.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double scale = std::sqrt(-2.0 * std::log(s) / s);
        cached_ = v * scale;
        have_cached_ = true;
        return u * scale;
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Lemire-style rejection; unbiased.
        std::uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t threshold = -n % n;
            while (lo < threshold) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    static std::uint64_t splitmix64(std::uint64_t&& x) {
        std::uint64_t y = x;
        return splitmix64(y);
    }
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> state_{};
    std::uint64_t seed_ = 0;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace seqci
