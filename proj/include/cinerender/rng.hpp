#pragma once

#include <cstdint>

namespace cinerender {

/// Counter-based generator keyed by (seed, frame, pixel, sample). The n-th
/// draw of a stream depends only on the key and n, never on which thread or
/// in which order streams are consumed.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t frame, std::uint64_t pixel, std::uint64_t sample)
        : key_(mix(mix(mix(mix(seed) ^ (frame * 0xD1B54A32D192ED03ULL)) ^
                       (pixel * 0xAEF17502108EF2D9ULL)) ^
                   (sample * 0xF1357AEA2E62A9C5ULL))) {}

    std::uint64_t next_u64() {
        ++counter_;
        return mix(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double next() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    std::uint64_t dimension() const { return counter_; }

private:
    static constexpr std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace cinerender
