#pragma once

#include <cstdint>

namespace orthomix {

/// Maps 64 raw bits onto [-1, 1) using the top 53 bits.
constexpr double uniform_from_bits(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

/// SplitMix64. The output sequence is part of the key format: a seed must
/// produce the same matrix on every platform, so the constants and the
/// order of operations here are frozen.
class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform on [-1, 1).
    constexpr double uniform() noexcept { return uniform_from_bits(next()); }

    /// Uniform integer in [0, bound). Modulo reduction; the bias is
    /// negligible for the small bounds used here.
    constexpr std::uint64_t below(std::uint64_t bound) noexcept { return next() % bound; }

    constexpr std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

}  // namespace orthomix
