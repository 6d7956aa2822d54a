#pragma once

// Gas-turbine driven AC generator in the dq frame: prime-mover speed loop
// (PI with anti-windup) and the adaptive terminal-voltage controller.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "gridshield/dq.hpp"
#include "gridshield/errors.hpp"
#include "gridshield/integrator.hpp"

namespace gridshield {

/// Parameter vector theta = [r, l, l*c].
using ParamVector = std::array<double, 3>;

/// Below this electrical speed (rad/s) the torque model is not evaluated.
inline constexpr double kOmegaFloor = 1.0;

enum class DerivativeSource {
    filter,  ///< high-gain derivative filter on the voltage error (default)
    exact,   ///< derivative computed from the capacitor equation
};

struct GeneratorParams {
    double tau{2.5};       // kg m^2
    double damping{0.3};
    double r{0.2};         // ohm
    double l{0.03};        // H
    double c{10e-6};       // F
    int poles{8};
    double k_p{500.0};     // speed loop, applied to (omega_ref - omega_m)
    double k_i{200.0};
    double k{3e-3};        // voltage loop gain
    double alpha{1000.0};  // filtered-error coefficient
    double gamma{1e-8};    // adaptation gain
    double k1{1000.0};     // derivative-filter gain
    /// Per-parameter multiplier on gamma. The adaptation law becomes
    /// gamma * diag(gamma_scale) * Y^T eta; {1,1,1} is the plain scalar law.
    ParamVector gamma_scale{1.0, 1.0, 1.0};
    double torque_max{1e12};  // N m, prime-mover actuator limit
    DerivativeSource derivative_source{DerivativeSource::filter};

    ParamVector true_parameters() const { return {r, l, l * c}; }

    void validate() const {
        auto require = [](bool ok, const std::string& what) {
            if (!ok) throw ValidationError("generator: " + what);
        };
        require(tau > 0 && l > 0 && c > 0, "tau, l, c must be positive");
        require(gamma > 0 && k > 0 && alpha > 0 && k1 > 0, "gamma, k, alpha, k1 must be positive");
        require(r >= 0 && damping >= 0, "r and damping must be non-negative");
        require(poles >= 2 && poles % 2 == 0, "poles must be even and >= 2");
        require(k_p >= 0 && k_i >= 0, "PI gains must be non-negative");
        require(torque_max > 0, "torque_max must be positive");
        for (double s : gamma_scale) require(s > 0, "gamma_scale entries must be positive");
    }
};

/// gamma_scale that normalizes each parameter by its nominal magnitude, so a
/// single gamma adapts r, l and l*c at comparable relative rates.
inline ParamVector relative_gamma_scale(const GeneratorParams& p) {
    const ParamVector theta = p.true_parameters();
    return {theta[0] * theta[0], theta[1] * theta[1], theta[2] * theta[2]};
}

struct GeneratorState {
    double omega_m{0.0};
    DqVector i{};
    DqVector v_c{};
    double pi_integral{0.0};
    ParamVector theta_hat{0.0, 0.0, 0.0};
    DqVector v_f{};
};

struct GeneratorReferences {
    double omega_ref{0.0};
    DqVector v_c_ref{};
    DqVector i_ref{};
};

/// Synchronous mechanical speed 4*pi*f/z.
inline double synchronous_speed(double frequency_hz, int poles) {
    return 4.0 * std::numbers::pi * frequency_hz / poles;
}

inline double electrical_speed(const GeneratorState& state, const GeneratorParams& params) {
    return params.poles * state.omega_m / 2.0;
}

inline double electrical_torque(const DqVector& v_c, const DqVector& i, double omega_e,
                                double omega_floor = kOmegaFloor) {
    if (std::abs(omega_e) <= omega_floor) {
        throw SpeedNearZero("electrical torque undefined at omega_e = " + std::to_string(omega_e));
    }
    return dot(v_c, i) / omega_e;
}

struct PiOutput {
    double torque{0.0};
    double integral{0.0};
};

/// Prime-mover speed regulation with torque feedforward:
///   T_m = T_e + k_p*e + k_i*int(e),  e = omega_ref - omega_m.
/// The torque is clamped to [0, torque_max]; while clamped, the integral is
/// frozen whenever the error would push further into saturation.
inline PiOutput pi_speed_control(const GeneratorState& state, const GeneratorReferences& refs,
                                 const GeneratorParams& params, double t_e, double dt) {
    const double error = refs.omega_ref - state.omega_m;
    double integral = state.pi_integral + error * dt;
    double torque = t_e + params.k_p * error + params.k_i * integral;
    const bool high = torque > params.torque_max && error > 0.0;
    const bool low = torque < 0.0 && error < 0.0;
    if (high || low) {
        integral = state.pi_integral;
        torque = t_e + params.k_p * error + params.k_i * integral;
    }
    return {std::clamp(torque, 0.0, params.torque_max), integral};
}

inline double mechanical_derivative(const GeneratorState& state, const GeneratorParams& params,
                                    double t_m, double t_e) {
    return (-params.damping * state.omega_m + t_m - t_e) / params.tau;
}

struct ElectricalDerivatives {
    DqVector di_dt{};
    DqVector dv_c_dt{};
};

/// Stator-current and terminal-capacitor dynamics; i_r is the current drawn
/// from the terminal node.
inline ElectricalDerivatives electrical_derivatives(const GeneratorState& state,
                                                    const GeneratorParams& params,
                                                    const DqVector& v, const DqVector& i_r) {
    const double we = electrical_speed(state, params);
    const DqVector di = (-(params.r * state.i - params.l * we * J(state.i)) + v - state.v_c) / params.l;
    const DqVector dv = (state.i - i_r + we * params.c * J(state.v_c)) / params.c;
    return {di, dv};
}

inline DqVector filtered_error(const DqVector& v_c_err, const DqVector& v_c_err_dot, double alpha) {
    return v_c_err_dot + alpha * v_c_err;
}

struct DerivativeFilterStep {
    DqVector v_f{};
    DqVector estimate{};
};

/// Advances v_f' = -k1*v_f - k1^2*err over dt (error held, exact update) and
/// returns the start-of-step derivative estimate v_f + k1*err.
inline DerivativeFilterStep derivative_filter_step(const DqVector& v_f, const DqVector& v_c_err,
                                                   double k1, double dt) {
    const DqVector estimate = v_f + k1 * v_c_err;
    const DqVector target = -k1 * v_c_err;
    const double tc = 1.0 / k1;
    return {{exact_first_order(v_f.d, target.d, tc, dt), exact_first_order(v_f.q, target.q, tc, dt)},
            estimate};
}

/// 2x3 regressor, stored column-wise.
struct Regressor {
    std::array<DqVector, 3> columns{};

    DqVector operator*(const ParamVector& theta) const {
        return theta[0] * columns[0] + theta[1] * columns[1] + theta[2] * columns[2];
    }
    ParamVector transpose_times(const DqVector& x) const {
        return {dot(columns[0], x), dot(columns[1], x), dot(columns[2], x)};
    }
};

inline Regressor regressor(const DqVector& i, const DqVector& i_r, const DqVector& v_c,
                           double omega_e, double alpha) {
    return {{-i,
             2.0 * omega_e * J(i) - omega_e * J(i_r) + alpha * (i - i_r),
             -omega_e * omega_e * v_c + alpha * omega_e * J(v_c)}};
}

/// v = -Y*theta_hat - k*eta + v_c_ref
inline DqVector adaptive_voltage_control(const DqVector& eta, const Regressor& y,
                                         const ParamVector& theta_hat, const DqVector& v_c_ref,
                                         double k) {
    return -(y * theta_hat) - k * eta + v_c_ref;
}

inline ParamVector parameter_update_derivative(const Regressor& y, const DqVector& eta, double gamma,
                                               const ParamVector& scale = {1.0, 1.0, 1.0}) {
    const ParamVector g = y.transpose_times(eta);
    return {gamma * scale[0] * g[0], gamma * scale[1] * g[1], gamma * scale[2] * g[2]};
}

/// Exact filtered error from the capacitor equation (no filter).
inline DqVector exact_filtered_error(const GeneratorState& state, const GeneratorParams& params,
                                     const GeneratorReferences& refs) {
    const DqVector err = state.v_c - refs.v_c_ref;
    const DqVector err_dot = electrical_derivatives(state, params, {}, refs.i_ref).dv_c_dt;
    return filtered_error(err, err_dot, params.alpha);
}

/// V = (c l / 2)|eta|^2 + (1/2) theta_tilde^T Gamma^-1 theta_tilde + (1/2)|v_c err|^2,
/// with Gamma = gamma * diag(gamma_scale) and eta computed exactly.
inline double lyapunov_value(const GeneratorState& state, const GeneratorParams& params,
                             const GeneratorReferences& refs) {
    const DqVector eta = exact_filtered_error(state, params, refs);
    const DqVector err = state.v_c - refs.v_c_ref;
    const ParamVector theta = params.true_parameters();
    double adaptation = 0.0;
    for (int j = 0; j < 3; ++j) {
        const double tilde = theta[j] - state.theta_hat[j];
        adaptation += tilde * tilde / (params.gamma * params.gamma_scale[j]);
    }
    return 0.5 * params.c * params.l * dot(eta, eta) + 0.5 * adaptation + 0.5 * dot(err, err);
}

/// A generator with its controllers. advance() computes every controller
/// output from the start-of-step state and takes one explicit Euler step.
class GeneratorUnit {
public:
    GeneratorParams params;
    GeneratorState state;
    GeneratorReferences refs;

    struct Outputs {
        double t_m{0.0};
        double t_e{0.0};
        DqVector v{};
        DqVector eta{};
    };

    GeneratorUnit() = default;
    GeneratorUnit(GeneratorParams p, GeneratorReferences r) : params(p), refs(r) { params.validate(); }

    /// Zero speed, zero current, discharged capacitor; theta_hat at the
    /// given fraction of the true parameters.
    void black_start(double theta_fraction) {
        state = {};
        const ParamVector theta = params.true_parameters();
        for (int j = 0; j < 3; ++j) state.theta_hat[j] = theta_fraction * theta[j];
        reset_filter();
    }

    /// Puts the derivative filter at its fixed point for the present error,
    /// so the first derivative estimate is zero.
    void reset_filter() { state.v_f = -params.k1 * (state.v_c - refs.v_c_ref); }

    double omega_e() const { return electrical_speed(state, params); }

    /// Measured active power 1/2 v_c^T i.
    double active_power() const { return 0.5 * dot(state.v_c, state.i); }

    const Outputs& last_outputs() const { return outputs_; }

    /// With hold_speed set, the mechanical state is frozen (constant omega_e).
    void advance(double h, bool hold_speed = false) {
        const double we = omega_e();
        const double t_e = std::abs(we) > kOmegaFloor ? electrical_torque(refs.v_c_ref, state.i, we) : 0.0;
        const PiOutput pi = pi_speed_control(state, refs, params, t_e, h);
        const double domega = mechanical_derivative(state, params, pi.torque, t_e);

        const DqVector err = state.v_c - refs.v_c_ref;
        DqVector err_dot;
        DqVector next_v_f = state.v_f;
        if (params.derivative_source == DerivativeSource::exact) {
            err_dot = electrical_derivatives(state, params, {}, refs.i_ref).dv_c_dt;
        } else {
            const DerivativeFilterStep fs = derivative_filter_step(state.v_f, err, params.k1, h);
            err_dot = fs.estimate;
            next_v_f = fs.v_f;
        }
        const DqVector eta = filtered_error(err, err_dot, params.alpha);
        const Regressor y = regressor(state.i, refs.i_ref, state.v_c, we, params.alpha);
        const DqVector v = adaptive_voltage_control(eta, y, state.theta_hat, refs.v_c_ref, params.k);
        const ElectricalDerivatives der = electrical_derivatives(state, params, v, refs.i_ref);
        const ParamVector dtheta = parameter_update_derivative(y, eta, params.gamma, params.gamma_scale);

        if (!hold_speed) {
            state.omega_m += h * domega;
            state.pi_integral = pi.integral;
        }
        state.i += h * der.di_dt;
        state.v_c += h * der.dv_c_dt;
        for (int j = 0; j < 3; ++j) state.theta_hat[j] += h * dtheta[j];
        state.v_f = next_v_f;
        outputs_ = {pi.torque, t_e, v, eta};
    }

private:
    Outputs outputs_{};
};

}  // namespace gridshield
