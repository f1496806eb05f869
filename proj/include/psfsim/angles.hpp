#pragma once

#include <cmath>
#include <numbers>

namespace psfsim {

/// Folds an angle in degrees into [0, 360). fmod is exact, so phi and
/// phi + 360 (when representable) fold to the identical value.
inline double normalize_deg(double phi) {
    double a = std::fmod(phi, 360.0);
    if (a < 0.0) {
        a += 360.0;
    }
    return a == 360.0 ? 0.0 : a;
}

/// cos/sin in degrees, exact at the cardinal angles so that encodings and
/// kernel symmetries hold bit-for-bit there (90° via radians would give
/// cos = 6.1e-17, not 0).
inline double cos_deg(double phi) {
    const double a = normalize_deg(phi);
    if (a == 0.0) return 1.0;
    if (a == 90.0) return 0.0;
    if (a == 180.0) return -1.0;
    if (a == 270.0) return 0.0;
    return std::cos(a * std::numbers::pi / 180.0);
}

inline double sin_deg(double phi) {
    const double a = normalize_deg(phi);
    if (a == 0.0) return 0.0;
    if (a == 90.0) return 1.0;
    if (a == 180.0) return 0.0;
    if (a == 270.0) return -1.0;
    return std::sin(a * std::numbers::pi / 180.0);
}

} // namespace psfsim
