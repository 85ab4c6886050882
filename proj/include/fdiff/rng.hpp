#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace fdiff {

/// Philox4x32-10 block function (Salmon et al., SC'11). Stateless: the
/// output is a pure function of (counter, key).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t kM0 = 0xD2511F53u;
    constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u;
    constexpr std::uint32_t kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kW0;
            key[1] += kW1;
        }
        const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

/// SplitMix64 finalizer; used to derive independent seeds from a base seed.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Seed for a sub-experiment (replica, purpose tag, system size ...).
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t s = mix64(seed);
    for (auto t : tags) s = mix64(s ^ mix64(t + 0x632BE59BD9B4E019ull));
    return s;
}

/// One reproducible stream of standard normals indexed by step.
///
/// Draw k of stream (seed, id) depends on nothing else, so particle updates
/// may be evaluated in any order or on any number of workers.
class RngStream {
public:
    constexpr RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept : seed_(seed), id_(stream_id) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return id_; }

    /// Normals for steps 2*block and 2*block+1 (Box-Muller on one block).
    std::array<double, 2> normal_pair(std::uint64_t block) const noexcept {
        const auto w = raw(block);
        const double u1 = to_unit(w[0], w[1]);
        const double u2 = to_unit(w[2], w[3]);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * std::numbers::pi * u2;
        return {r * std::cos(th), r * std::sin(th)};
    }

    double normal(std::uint64_t k) const noexcept { return normal_pair(k >> 1)[k & 1u]; }

    /// Uniform on the open interval (0, 1).
    double uniform(std::uint64_t k) const noexcept {
        const auto w = raw(k >> 1);
        return (k & 1u) ? to_unit(w[2], w[3]) : to_unit(w[0], w[1]);
    }

private:
    std::array<std::uint32_t, 4> raw(std::uint64_t block) const noexcept {
        return philox4x32({static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                           static_cast<std::uint32_t>(id_), static_cast<std::uint32_t>(id_ >> 32)},
                          {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
    }

    static double to_unit(std::uint32_t a, std::uint32_t b) noexcept {
        const std::uint64_t bits = ((std::uint64_t{a} << 32) | b) >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    std::uint64_t seed_;
    std::uint64_t id_;
};

/// Free-function form of RngStream::normal.
inline double normal_increment(const RngStream& stream, std::uint64_t k) noexcept { return stream.normal(k); }

}  // namespace fdiff
