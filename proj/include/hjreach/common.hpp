#pragma once

// Shared error types and small numeric helpers.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hjreach {

/// Malformed or inconsistent structured input (config, checkpoint, CSV header).
/// The message names the offending field.
class SchemaError : public std::runtime_error {
public:
    explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite value encountered during evaluation; message carries the sample
/// or node index where it appeared.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr double kPi = std::numbers::pi_v<double>;

/// Sign with the fixed tie-break sign(0) = +1.
inline double sgn_pos(double v) { return v >= 0.0 ? 1.0 : -1.0; }

inline double sq(double v) { return v * v; }

/// Wrap an angle into the canonical range [-pi, pi).
inline double wrap_angle(double a) {
    double w = std::fmod(a + kPi, 2.0 * kPi);
    if (w < 0.0) w += 2.0 * kPi;
    return w - kPi;
}

/// splitmix64 mixer; used to derive independent RNG streams from
/// (seed, step, stream) tuples so sampling is reproducible per step.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(a) ^ (0x9e3779b97f4a7c15ULL + b));
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix64(mix64(a, b) ^ (0xd1b54a32d192ed03ULL + c));
}

}  // namespace hjreach
