#pragma once

#include <array>
#include <cstdint>

namespace oukit {

/// SplitMix64 finalizer. Used to derive independent child seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a) noexcept {
    return mix64(seed ^ mix64(a));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
    return derive_seed(derive_seed(seed, a), b);
}

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// Output block `i` of stream `stream` depends only on (key, stream, i), so
/// any path can be regenerated without touching the others.
class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;

    explicit Philox4x32(std::uint64_t key) noexcept
        : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)} {}

    Block operator()(std::uint64_t stream, std::uint64_t index) const noexcept {
        Block ctr{static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                  static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
        std::array<std::uint32_t, 2> k = key_;
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k[1], static_cast<std::uint32_t>(p0)};
            k[0] += 0x9E3779B9u;
            k[1] += 0xBB67AE85u;
        }
        return ctr;
    }

private:
    std::array<std::uint32_t, 2> key_;
};

/// Sequential view over one Philox stream producing standard normals
/// (Box-Muller, two normals per 128-bit block).
class NormalStream {
public:
    NormalStream(std::uint64_t key, std::uint64_t stream) noexcept : gen_(key), stream_(stream) {}

    double next() noexcept;

private:
    Philox4x32 gen_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Sequential uniform draws on [0, 1) from one Philox stream (53-bit resolution).
class UniformStream {
public:
    UniformStream(std::uint64_t key, std::uint64_t stream) noexcept : gen_(key), stream_(stream) {}

    double next() noexcept;
    double next(double lo, double hi) noexcept { return lo + (hi - lo) * next(); }

private:
    Philox4x32 gen_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace oukit
