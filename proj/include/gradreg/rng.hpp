#pragma once
// Deterministic random number generation.
//
// All randomness in the project flows through SplitMix64 (Steele, Lea &
// Flood, "Fast splittable pseudorandom number generators", OOPSLA 2014).
// Independent streams are derived by hashing (seed, tag, index), so any
// object (data point, filter bank, sweep cell) can be regenerated in
// isolation and in any order. Gaussian variates use Box-Muller on 53-bit
// uniforms; no libstdc++ distribution is involved, so sequences are
// bit-identical across platforms and compilers.

#include <cmath>
#include <cstdint>

namespace gradreg {

// SplitMix64 finalizer; also usable as a 64-bit mixing hash.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed, a tag namespace and
// an index. Distinct (tag, index) pairs give unrelated streams.
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
    return mix64(mix64(seed ^ mix64(tag)) + index);
}

// Stream tags used across the project.
namespace stream_tag {
inline constexpr std::uint64_t point = 0x706f696e74ULL;        // "point"
inline constexpr std::uint64_t test_point = 0x7465737470ULL;   // "testp"
inline constexpr std::uint64_t init = 0x696e6974ULL;           // "init"
inline constexpr std::uint64_t trial = 0x747269616cULL;        // "trial"
inline constexpr std::uint64_t cell = 0x63656c6cULL;           // "cell"
}  // namespace stream_tag

struct SplitMix64 {
    std::uint64_t state = 0;

    explicit SplitMix64(std::uint64_t seed = 0) : state(seed) {}

    std::uint64_t next() {
        state += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform double in (0, 1]; safe as a log() argument.
    double next_unit_pos() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }
};

// Standard normal variates via Box-Muller, one stream per sampler.
struct GaussianStream {
    SplitMix64 gen;
    bool have_spare = false;
    double spare = 0.0;

    explicit GaussianStream(std::uint64_t seed) : gen(seed) {}

    double next() {
        if (have_spare) {
            have_spare = false;
            return spare;
        }
        const double u1 = gen.next_unit_pos();
        const double u2 = gen.next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare = r * std::sin(theta);
        have_spare = true;
        return r * std::cos(theta);
    }
};

}  // namespace gradreg
