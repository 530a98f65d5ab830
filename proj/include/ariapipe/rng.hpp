#pragma once

#include <cstdint>
#include <string_view>

namespace ariapipe {

/// Stateless counter-based generator: value(k) is a pure function of
/// (seed, stream, k). Integer-only mixing keeps draws identical across
/// platforms and standard libraries.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_(mix(seed ^ mix(stream + 0x9E3779B97F4A7C15ULL))) {}

    std::uint64_t at(std::uint64_t counter) const noexcept {
        return mix(key_ + (counter + 1) * 0x9E3779B97F4A7C15ULL);
    }

    /// Uniform integer in [lo, hi] via 128-bit multiply-high.
    std::int64_t uniform_int(std::uint64_t counter, std::int64_t lo, std::int64_t hi) const noexcept {
        if (hi <= lo) return lo;
        const auto span = static_cast<unsigned __int128>(static_cast<std::uint64_t>(hi - lo)) + 1;
        return lo + static_cast<std::int64_t>((span * at(counter)) >> 64);
    }

    /// Uniform real in [lo, hi).
    double uniform_real(std::uint64_t counter, double lo, double hi) const noexcept {
        const double u = static_cast<double>(at(counter) >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }

    // splitmix64 finalizer
    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t key_;
};

/// Derives a child stream id, e.g. one per contrastive view.
constexpr std::uint64_t substream(std::uint64_t stream, std::uint64_t index) noexcept {
    return CounterRng::mix(stream * 0xD1B54A32D192ED03ULL + index + 1);
}

/// FNV-1a, used to key per-file streams by source id.
constexpr std::uint64_t stable_hash(std::string_view text) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace ariapipe
