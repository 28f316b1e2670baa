#pragma once

// Unit conventions: every user-facing frequency or rate is an ordinary
// frequency in Hz (the ω/2π value). Kernels work in rad/s throughout.

#include <cmath>
#include <numbers>

namespace optomech::units {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kHbar = 1.054571817e-34;  // J·s

constexpr double to_angular(double hz) { return kTwoPi * hz; }
constexpr double to_hz(double rad_per_s) { return rad_per_s / kTwoPi; }

inline double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }
inline double watts_to_dbm(double watts) { return 10.0 * std::log10(watts / 1e-3); }

}  // namespace optomech::units
