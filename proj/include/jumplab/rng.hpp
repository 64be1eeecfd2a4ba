#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace jumplab {

/// SplitMix64 finalizer; also used as a stateless hash for deriving
/// substream keys from (seed, index) pairs.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// xoshiro256** generator with counter-derived substreams.
///
/// `Rng::substream(seed, i)` hashes the pair through SplitMix64 to produce
/// independent, reproducible streams for ensemble member `i`. All variate
/// generation is implemented here (no <random> distributions) so the
/// produced sequences are bitwise identical across standard libraries.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) noexcept { reseed(seed); }

    static Rng substream(std::uint64_t seed, std::uint64_t index) noexcept {
        return Rng(splitmix64(seed ^ splitmix64(index + 0x632BE59BD9B4E019ULL)));
    }

    /// Child stream keyed by `index`, independent of this stream's position.
    Rng split(std::uint64_t index) const noexcept { return substream(key_, index); }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_pos() noexcept { return 1.0 - uniform(); }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n) by Lemire's multiply-shift (n > 0).
    std::uint64_t index(std::uint64_t n) noexcept {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * n) >> 64);
    }

    double exponential(double rate) noexcept { return -std::log(uniform_pos()) / rate; }

    /// Standard normal via Box-Muller (one variate per call, no caching).
    double normal() noexcept {
        const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
        return r * std::cos(2.0 * std::numbers::pi * uniform());
    }

    std::uint64_t key() const noexcept { return key_; }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    void reseed(std::uint64_t seed) noexcept {
        key_ = seed;
        std::uint64_t z = seed;
        for (auto& s : s_) {
            z += 0x9E3779B97F4A7C15ULL;
            s = splitmix64(z);
        }
    }

    std::uint64_t key_ = 0;
    std::array<std::uint64_t, 4> s_{};
};

}  // namespace jumplab
