#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

#include "flowdet/common.hpp"

namespace flowdet {

inline constexpr int kNumChannels = 12;
inline constexpr double kPi = 3.14159265358979323846;

/// Channel indices into ImuSample::ch.
enum Channel : int {
  kGX = 0, kGY, kGZ,         // gravity, unit-g components
  kAX, kAY, kAZ,             // user acceleration, m/s^2
  kRX, kRY, kRZ,             // rotation rate, rad/s
  kYaw, kRoll, kPitch        // attitude, rad
};

inline constexpr std::array<std::string_view, kNumChannels> kChannelNames = {
    "GravityX",      "GravityY",      "GravityZ",     "AccelerationX",
    "AccelerationY", "AccelerationZ", "RotationRateX", "RotationRateY",
    "RotationRateZ", "AttitudeYAW",   "AttitudeROLL",  "AttitudePITCH"};

/// Short column names used in motion CSV files.
inline constexpr std::array<std::string_view, kNumChannels> kCsvColumns = {
    "gx", "gy", "gz", "ax", "ay", "az", "rx", "ry", "rz", "yaw", "roll", "pitch"};

struct Bounds {
  double lo;
  double hi;
};

/// Observed extremes of the recorded motion channels.
inline constexpr std::array<Bounds, kNumChannels> kObservedRanges = {{
    {-1.0, 1.0},
    {-1.0, 1.0},
    {-1.0, 1.0},
    {-17.1031, 7.0596},
    {-16.2396, 16.6477},
    {-16.3296, 16.8778},
    {-26.3145, 40.8265},
    {-39.8416, 32.0937},
    {-35.2566, 25.3197},
    {-kPi, kPi},
    {-kPi, kPi},
    {-kPi / 2, kPi / 2},
}};

// Validation envelope: gravity and attitude are physically bounded; user
// acceleration and rotation rate get a margin beyond the observed extremes.
inline constexpr double kAccelEnvelope = 20.0;
inline constexpr double kRotEnvelope = 45.0;

inline constexpr std::array<Bounds, kNumChannels> kValidationBounds = {{
    {-1.0, 1.0},
    {-1.0, 1.0},
    {-1.0, 1.0},
    {-kAccelEnvelope, kAccelEnvelope},
    {-kAccelEnvelope, kAccelEnvelope},
    {-kAccelEnvelope, kAccelEnvelope},
    {-kRotEnvelope, kRotEnvelope},
    {-kRotEnvelope, kRotEnvelope},
    {-kRotEnvelope, kRotEnvelope},
    {-kPi, kPi},
    {-kPi, kPi},
    {-kPi / 2, kPi / 2},
}};

/// One decisecond of the 12 motion channels.
struct ImuSample {
  std::int64_t t_ds = 0;
  std::array<double, kNumChannels> ch{};

  bool operator==(const ImuSample&) const = default;
};

/// Throws RangeError naming the offending channel; line 0 omits location.
inline void validate_sample(const ImuSample& s, std::int64_t line = 0) {
  for (int c = 0; c < kNumChannels; ++c) {
    double v = s.ch[c];
    if (!std::isfinite(v)) {
      throw RangeError(cat("non-finite value in ", kChannelNames[c],
                           line ? cat(" at line ", line) : ""));
    }
    const Bounds& b = kValidationBounds[c];
    if (v < b.lo || v > b.hi) {
      throw RangeError(cat(kChannelNames[c], " = ", v, " outside [", b.lo, ", ", b.hi, "]",
                           line ? cat(" at line ", line) : ""));
    }
  }
}

}  // namespace flowdet
