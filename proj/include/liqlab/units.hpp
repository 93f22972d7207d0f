#pragma once

#include <cstdint>

namespace liqlab {

// One year is 365.25 days.
inline constexpr double kSecondsPerYear = 31557600.0;
inline constexpr double kHoursPerYear = kSecondsPerYear / 3600.0;

// Capacities are binary, rates are decimal.
inline constexpr double kKiB = 1024.0;
inline constexpr double kMiB = kKiB * 1024.0;
inline constexpr double kGiB = kMiB * 1024.0;
inline constexpr double kTiB = kGiB * 1024.0;
inline constexpr double kPiB = kTiB * 1024.0;

inline constexpr double kGbps = 1e9;
inline constexpr double kTbps = 1e12;

inline constexpr double seconds_to_years(double s) { return s / kSecondsPerYear; }
inline constexpr double years_to_seconds(double y) { return y * kSecondsPerYear; }
inline constexpr double years_to_hours(double y) { return y * kHoursPerYear; }

// Bits per second needed to move `bytes` in `years`.
inline double bytes_per_years_to_bps(double bytes, double years) {
  return 8.0 * bytes / (years * kSecondsPerYear);
}

// Years needed to move `bytes` at `bps`.
inline double transfer_years(double bytes, double bps) {
  return 8.0 * bytes / (bps * kSecondsPerYear);
}

}  // namespace liqlab
