#pragma once

#include <cmath>

namespace gridshield {

/// Two-axis (direct/quadrature) electrical quantity. Volts or amperes,
/// depending on context; all values are SI.
struct DqVector {
    double d{0.0};
    double q{0.0};

    constexpr DqVector& operator+=(const DqVector& o) { d += o.d; q += o.q; return *this; }
    constexpr DqVector& operator-=(const DqVector& o) { d -= o.d; q -= o.q; return *this; }
    constexpr DqVector& operator*=(double s) { d *= s; q *= s; return *this; }

    friend constexpr DqVector operator+(DqVector a, const DqVector& b) { return a += b; }
    friend constexpr DqVector operator-(DqVector a, const DqVector& b) { return a -= b; }
    friend constexpr DqVector operator-(const DqVector& a) { return {-a.d, -a.q}; }
    friend constexpr DqVector operator*(double s, DqVector a) { return a *= s; }
    friend constexpr DqVector operator*(DqVector a, double s) { return a *= s; }
    friend constexpr DqVector operator/(DqVector a, double s) { return {a.d / s, a.q / s}; }
    friend constexpr bool operator==(const DqVector&, const DqVector&) = default;
};

/// The constant rotation operator J = [[0, 1], [-1, 0]].
struct RotationJ {
    constexpr DqVector operator()(const DqVector& x) const { return {x.q, -x.d}; }
};

inline constexpr RotationJ J{};

constexpr DqVector apply_j(const DqVector& x) { return J(x); }

constexpr double dot(const DqVector& x, const DqVector& y) { return x.d * y.d + x.q * y.q; }

inline double norm(const DqVector& x) { return std::hypot(x.d, x.q); }

inline bool is_finite(const DqVector& x) { return std::isfinite(x.d) && std::isfinite(x.q); }

}  // namespace gridshield
