#pragma once

// Controllable AC power load with a sliding-mode current controller.

#include <cmath>
#include <string>

#include "gridshield/dq.hpp"
#include "gridshield/errors.hpp"

namespace gridshield {

struct LoadParams {
    double r_l{0.3};               // ohm
    double l_l{0.03};              // H
    double rho{0.0};               // V, switching gain
    double k{50.0};                // linear gain
    double disturbance_bound{0.0};  // V, bound on |f_L|
    double boundary_layer{0.0};    // A; 0 selects the pure sign law

    void validate() const {
        if (!(l_l > 0)) throw ValidationError("load: l_l must be positive");
        if (!(k > 0)) throw ValidationError("load: k must be positive");
        if (!(r_l >= 0)) throw ValidationError("load: r_l must be non-negative");
        if (!(disturbance_bound >= 0)) throw ValidationError("load: disturbance_bound must be non-negative");
        if (!(rho > disturbance_bound)) throw ValidationError("load: rho must exceed disturbance_bound");
        if (!(boundary_layer >= 0)) throw ValidationError("load: boundary_layer must be non-negative");
    }
};

struct LoadState {
    DqVector i_l{};
    DqVector i_ref{};
};

inline DqVector load_derivative(const LoadState& state, const LoadParams& params, const DqVector& v_l,
                                const DqVector& v_g, double omega_e) {
    return (-(params.r_l * state.i_l - params.l_l * omega_e * J(state.i_l)) + v_l - v_g) / params.l_l;
}

/// Lumped disturbance f_L = -(r_L I - l_L w J) i_L - v_g.
inline DqVector load_disturbance(const LoadState& state, const LoadParams& params, const DqVector& v_g,
                                 double omega_e) {
    return -(params.r_l * state.i_l - params.l_l * omega_e * J(state.i_l)) - v_g;
}

namespace detail {
inline double sign_or_sat(double s, double layer) {
    if (layer > 0.0) {
        const double x = s / layer;
        return x > 1.0 ? 1.0 : (x < -1.0 ? -1.0 : x);
    }
    return static_cast<double>((s > 0.0) - (s < 0.0));
}
}  // namespace detail

/// v_L = -rho*sgn(sigma) - k*sigma, component-wise, sigma = i_L - i_ref.
/// sgn(0) = 0; with a boundary layer the sign is replaced by sat(sigma/eps).
inline DqVector sliding_mode_control(const LoadState& state, const LoadParams& params) {
    const DqVector sigma = state.i_l - state.i_ref;
    const double eps = params.boundary_layer;
    return {-params.rho * detail::sign_or_sat(sigma.d, eps) - params.k * sigma.d,
            -params.rho * detail::sign_or_sat(sigma.q, eps) - params.k * sigma.q};
}

/// Certified finite reaching time of the sign law:
///   t_r = -(l_L/k) ln( m / (|sigma0| + m) ),  m = (rho - L)/k.
inline double reaching_time(const LoadParams& params, double sigma0_norm) {
    if (!(params.rho > params.disturbance_bound)) {
        throw GainTooSmall("rho must exceed the disturbance bound for a reaching guarantee");
    }
    if (sigma0_norm <= 0.0) return 0.0;
    const double margin = (params.rho - params.disturbance_bound) / params.k;
    return -(params.l_l / params.k) * std::log(margin / (sigma0_norm + margin));
}

struct SwitchingGain {
    double disturbance_bound{0.0};
    double rho{0.0};
};

/// Worst-case |f_L| by the triangle inequality for |i_L| <= i_max,
/// |v_g| <= v_g_max, |w_e| <= omega_max; rho = margin * bound.
inline SwitchingGain design_switching_gain(double r_l, double l_l, double i_max, double v_g_max,
                                           double omega_max, double margin = 1.2) {
    const double bound = (r_l + l_l * omega_max) * i_max + v_g_max;
    return {bound, margin * bound};
}

class LoadUnit {
public:
    LoadParams params;
    LoadState state;

    LoadUnit() = default;
    LoadUnit(LoadParams p, DqVector i_ref) : params(p) {
        params.validate();
        state.i_ref = i_ref;
    }

    DqVector sigma() const { return state.i_l - state.i_ref; }
    DqVector last_control() const { return last_v_l_; }

    void advance(double h, const DqVector& v_g, double omega_e) {
        last_v_l_ = sliding_mode_control(state, params);
        state.i_l += h * load_derivative(state, params, last_v_l_, v_g, omega_e);
    }

private:
    DqVector last_v_l_{};
};

}  // namespace gridshield
