#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace pricing {

/// Philox4x64-10 counter-based generator. A (seed, stream) pair selects an
/// independent sequence, so parallel consumers can be keyed by index without
/// any shared state or jump-ahead bookkeeping.
class Philox4x64 {
public:
    Philox4x64(std::uint64_t seed, std::uint64_t stream) : key_{seed, stream} {}

    Philox4x64(std::array<std::uint64_t, 2> key, std::array<std::uint64_t, 4> counter)
        : key_{key}, counter_{counter} {}

    std::uint64_t next_u64() {
        if (pos_ == 4) {
            advance_counter();
            block_ = generate(counter_, key_);
            pos_ = 0;
        }
        return block_[pos_++];
    }

    /// Uniform on (0,1]; never returns 0, so log() is safe.
    double next_open_unit() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    /// Uniform on [0,1).
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; generates pairs and caches the spare.
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_open_unit();
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    /// One 4-word output block for a given counter/key (pure function).
    /// The streaming interface increments the counter before each block,
    /// so a fresh stream's first block is generate({1,0,0,0}, key).
    static std::array<std::uint64_t, 4> generate(std::array<std::uint64_t, 4> counter,
                                                 std::array<std::uint64_t, 2> key) {
        round(counter, key);
        for (int r = 1; r < 10; ++r) {
            key[0] += weyl0;
            key[1] += weyl1;
            round(counter, key);
        }
        return counter;
    }

private:
    static constexpr std::uint64_t mult0 = 0xD2E7470EE14C6C93ull;
    static constexpr std::uint64_t mult1 = 0xCA5A826395121157ull;
    static constexpr std::uint64_t weyl0 = 0x9E3779B97F4A7C15ull;
    static constexpr std::uint64_t weyl1 = 0xBB67AE8584CAA73Bull;

    static void round(std::array<std::uint64_t, 4>& x, const std::array<std::uint64_t, 2>& k) {
        const auto p0 = static_cast<unsigned __int128>(mult0) * x[0];
        const auto p1 = static_cast<unsigned __int128>(mult1) * x[2];
        const auto hi0 = static_cast<std::uint64_t>(p0 >> 64);
        const auto lo0 = static_cast<std::uint64_t>(p0);
        const auto hi1 = static_cast<std::uint64_t>(p1 >> 64);
        const auto lo1 = static_cast<std::uint64_t>(p1);
        x = {hi1 ^ x[1] ^ k[0], lo1, hi0 ^ x[3] ^ k[1], lo0};
    }

    void advance_counter() {
        for (auto& word : counter_)
            if (++word != 0) break;
    }

    std::array<std::uint64_t, 2> key_;
    std::array<std::uint64_t, 4> counter_{0, 0, 0, 0};
    std::array<std::uint64_t, 4> block_{};
    int pos_ = 4;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace pricing
