#include "oukit/random.hpp"

#include <cmath>
#include <numbers>

namespace oukit {

namespace {

// 53-bit uniform on [0, 1).
double to_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
    return static_cast<double>(bits) * 0x1.0p-53;
}

}  // namespace

double NormalStream::next() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const auto b = gen_(stream_, block_++);
    // u1 in (0, 1] keeps the log finite.
    const double u1 = 1.0 - to_unit(b[0], b[1]);
    const double u2 = to_unit(b[2], b[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
}

double UniformStream::next() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const auto b = gen_(stream_, block_++);
    spare_ = to_unit(b[2], b[3]);
    has_spare_ = true;
    return to_unit(b[0], b[1]);
}

}  // namespace oukit
