#pragma once

#include <cstdint>

#include "curves/core/time.hpp"

namespace curves {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t combine_seed(std::uint64_t seed, std::uint64_t key) noexcept {
    return mix64(seed ^ mix64(key));
}

/// Per-(timestamp, expiry) seed; independent of the order tasks are run in.
constexpr std::uint64_t slice_seed(std::uint64_t master, UtcTime timestamp, UtcTime expiry) noexcept {
    const auto t = static_cast<std::uint64_t>(timestamp.seconds_since_epoch());
    const auto e = static_cast<std::uint64_t>(expiry.seconds_since_epoch());
    return combine_seed(combine_seed(master, t), e);
}

} // namespace curves
