#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fjsync {

// SplitMix64 finalizer. Used only to derive independent substream seeds.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// 64-bit Mersenne Twister stream keyed by (seed, stream id).
///
/// Uniforms and exponentials are derived from raw 64-bit output by hand
/// rather than via <random> distributions, whose algorithms are
/// implementation-defined; the sample stream is therefore identical on every
/// conforming standard library.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t stream_id)
        : engine_(splitmix64(splitmix64(seed) ^ splitmix64(stream_id + 0x632BE59BD9B4E019ULL))) {}

    // Uniform on (0, 1): 53 random mantissa bits, offset by half an ulp.
    double uniform() noexcept {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Inverse transform: monotone in the uniform draw.
    double exponential(double rate) noexcept { return -std::log(uniform()) / rate; }

private:
    std::mt19937_64 engine_;
};

enum class StreamId : std::uint64_t { arrivals = 1, branch_a = 2, branch_b = 3, synthetic = 4 };

inline RandomStream make_stream(std::uint64_t seed, StreamId id) {
    return RandomStream(seed, static_cast<std::uint64_t>(id));
}

}  // namespace fjsync
