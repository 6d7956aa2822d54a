#pragma once

// Thevenin-equivalent Li-ion battery behind an ideal, lossless inverter.
// Sign convention: i_b > 0 discharges.

#include <algorithm>
#include <cmath>
#include <string>

#include "gridshield/errors.hpp"
#include "gridshield/integrator.hpp"

namespace gridshield {

struct BatteryParams {
    double r_b{0.3};          // ohm, internal resistance
    double r_p{0.09};         // ohm, polarization resistance
    double c_p{10e-6};        // F, polarization capacitance
    double q_b{25.0};         // A h
    double beta1{1071.0};     // V, OCV slope
    double beta2{3357.0};     // V, OCV intercept
    double p_max{10e6};       // W, inverter rating
    double v_dc_nominal{12000.0};  // V

    void validate() const {
        if (!(r_b > 0 && r_p > 0 && c_p > 0 && q_b > 0)) {
            throw ValidationError("battery: r_b, r_p, c_p and q_b must be positive");
        }
        if (!(p_max > 0)) throw ValidationError("battery: p_max must be positive");
        if (!(v_dc_nominal > 0)) throw ValidationError("battery: v_dc_nominal must be positive");
    }
};

struct BatteryState {
    double soc{0.8};
    double v_p{0.0};  // V
    double i_b{0.0};  // A
};

inline double ocv(double soc, const BatteryParams& params) {
    if (!(soc >= 0.0 && soc <= 1.0)) {
        throw SocOutOfRange("state of charge " + std::to_string(soc) + " outside [0, 1]");
    }
    return params.beta1 * soc + params.beta2;
}

/// i_b = (v_t - v_b - v_oc - v_p) / r_b
inline double battery_current(double v_t, double v_b, double v_oc, double v_p, double r_b) {
    return (v_t - v_b - v_oc - v_p) / r_b;
}

inline double polarization_derivative(double i_b, double v_p, const BatteryParams& params) {
    return (i_b - v_p / params.r_p) / params.c_p;
}

inline double soc_derivative(double i_b, const BatteryParams& params) {
    return -i_b / (3600.0 * params.q_b);
}

/// Controllable battery voltage that draws p_set/v_dc from the cell at the
/// present state. |p_set| is limited to p_max.
inline double voltage_for_power(double p_set, double v_dc, const BatteryState& state,
                                const BatteryParams& params) {
    if (!(v_dc >= 0.1 * params.v_dc_nominal)) {
        throw DcVoltageCollapse("DC link at " + std::to_string(v_dc) + " V");
    }
    const double p = std::clamp(p_set, -params.p_max, params.p_max);
    const double i_target = p / v_dc;
    return v_dc - ocv(state.soc, params) - state.v_p - params.r_b * i_target;
}

class BatteryUnit {
public:
    BatteryParams params;
    BatteryState state;

    BatteryUnit() = default;
    BatteryUnit(BatteryParams p, double soc0) : params(p) {
        params.validate();
        state.soc = soc0;
    }

    /// Advances over h with v_b and the terminal voltage v_t held. The
    /// polarization branch is stiff (r_p*c_p ~ 1 us), so v_p uses the exact
    /// solution of the coupled first-order system; the SoC is advanced with
    /// the exact mean current over the step, which is also stored in i_b.
    void advance(double h, double v_b, double v_t) {
        const double v_oc = ocv(state.soc, params);
        const double drive = v_t - v_b - v_oc;
        const double parallel = params.r_b * params.r_p / (params.r_b + params.r_p);
        const double tc = params.c_p * parallel;
        const double target = drive * params.r_p / (params.r_b + params.r_p);
        const double v_p_mean = exact_first_order_mean(state.v_p, target, tc, h);
        const double i_mean = battery_current(v_t, v_b, v_oc, v_p_mean, params.r_b);
        state.v_p = exact_first_order(state.v_p, target, tc, h);
        state.i_b = i_mean;
        state.soc += h * soc_derivative(i_mean, params);
    }

    /// Realizes p_set (W) at DC-link voltage v_dc. The controllable voltage is
    /// chosen for the quasi-steady polarization r_p*i, which the branch reaches
    /// within a few microseconds.
    void realize_power(double p_set, double v_dc, double h) {
        const double p = std::clamp(p_set, -params.p_max, params.p_max);
        BatteryState quasi = state;
        quasi.v_p = params.r_p * p / v_dc;
        advance(h, voltage_for_power(p, v_dc, quasi, params), v_dc);
    }

    void idle(double h) {
        state.i_b = 0.0;
        state.v_p = exact_first_order(state.v_p, 0.0, params.c_p * params.r_p, h);
    }
};

}  // namespace gridshield
