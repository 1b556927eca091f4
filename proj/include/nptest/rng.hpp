#pragma once

#include <bit>
#include <cstdint>

#include "nptest/numerics.hpp"

namespace nptest {

// Counter-based splittable generator. Each draw is a pure function of
// (key, counter), so streams derived from the same key chain are identical
// regardless of execution order or thread placement. The output function is
// the SplitMix64 finalizer (Steele/Lea/Flood 2014, Vigna's fixed-increment
// variant).
class SplitRng {
public:
    explicit SplitRng(std::uint64_t seed) : key_(mix(seed ^ kGamma)) {}

    /// Derive an independent substream keyed by `tag`. Chain calls to key a
    /// stream by a tuple, e.g. rng.child(n).child(rep).child(kStreamNoise).
    [[nodiscard]] SplitRng child(std::uint64_t tag) const {
        SplitRng r(*this);
        r.key_ = mix(key_ + kGamma * (tag + 1));
        r.counter_ = 0;
        return r;
    }

    [[nodiscard]] SplitRng child_double(double tag) const {
        return child(std::bit_cast<std::uint64_t>(tag));
    }

    std::uint64_t next_u64() { return mix(key_ + kGamma * ++counter_); }

    /// Uniform on the open interval (0, 1), 53-bit mantissa.
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal by inverse CDF; exactly reproducible across platforms.
    double normal() { return normal_icdf(uniform01()); }

private:
    static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Stream tags used when deriving substreams for one simulated dataset.
inline constexpr std::uint64_t kStreamDesign = 0xD1;
inline constexpr std::uint64_t kStreamNoise = 0xE2;
inline constexpr std::uint64_t kStreamMonteCarlo = 0xF3;

} // namespace nptest
