#pragma once

#include <algorithm>
#include <cmath>

#include "steerlab/tensor.hpp"

namespace steerlab {

inline constexpr double kPi = 3.14159265358979323846;

namespace detail {
inline void require_unit(const Vec& v, const char* who) {
    const double n = norm(v);
    if (std::abs(n - 1.0) > 1e-6) throw NotUnit(who);
}
}  // namespace detail

/// Angle between two unit vectors: arccos of the clamped inner product.
inline double geodesic(const Vec& a, const Vec& b) {
    detail::require_unit(a, "geodesic: a");
    detail::require_unit(b, "geodesic: b");
    const double c = std::clamp(dot(a, b), -1.0, 1.0);
    return std::acos(c);
}

/// (||h||, h / ||h||)
inline std::pair<double, Vec> unit_decompose(const Vec& h) {
    const double r = norm(h);
    if (!(r > 0.0) || !std::isfinite(r)) throw ZeroVector("unit_decompose");
    return {r, scaled(h, 1.0 / r)};
}

/// Spherical linear interpolation between unit vectors. Falls back to
/// normalized linear interpolation when the angle is numerically zero;
/// refuses antipodal pairs (no unique great circle).
inline Vec slerp(const Vec& a, const Vec& b, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw InvalidArgument("slerp: lambda outside [0, 1]");
    const double theta = geodesic(a, b);
    if (theta >= kPi - 1e-9) throw AntipodalDirection("slerp");
    if (lambda == 0.0) return a;
    if (lambda == 1.0) return b;
    const double st = std::sin(theta);
    if (st < 1e-7) {
        Vec r = scaled(a, 1.0 - lambda);
        axpy(lambda, b, r);
        return normalized(r);
    }
    Vec r = scaled(a, std::sin((1.0 - lambda) * theta) / st);
    axpy(std::sin(lambda * theta) / st, b, r);
    return r;
}

/// Contraction factor alpha(lambda, theta) = sin((1-lambda) theta) / sin(theta),
/// extended continuously with alpha(., 0) = 1.
inline double contraction_alpha(double lambda, double theta) {
    if (lambda == 0.0) return 1.0;
    if (lambda == 1.0) return 0.0;
    if (theta < 1e-12) return 1.0;
    return std::sin((1.0 - lambda) * theta) / std::sin(theta);
}

}  // namespace steerlab
