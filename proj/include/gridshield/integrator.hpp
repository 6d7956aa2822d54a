#pragma once

#include <cmath>

namespace gridshield {

/// One explicit Euler step: x + h * f(x).
template <class State, class Derivative>
State euler_step(const State& x, Derivative&& f, double h) {
    return x + h * f(x);
}

/// Exact solution of x' = -(x - target) / time_constant over h with the
/// target held constant. Stable for any h; used for stiff first-order states.
inline double exact_first_order(double x, double target, double time_constant, double h) {
    return target + (x - target) * std::exp(-h / time_constant);
}

/// Mean of the exact first-order trajectory above over [0, h].
inline double exact_first_order_mean(double x, double target, double time_constant, double h) {
    const double ratio = h / time_constant;
    const double weight = ratio > 1e-12 ? -std::expm1(-ratio) / ratio : 1.0;
    return target + (x - target) * weight;
}

}  // namespace gridshield
