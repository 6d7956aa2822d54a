#pragma once

// Common-bus coupling of generators, loads and the battery; power
// measurements and the false-data channel on the load measurement.

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "gridshield/battery.hpp"
#include "gridshield/dq.hpp"
#include "gridshield/errors.hpp"
#include "gridshield/generator.hpp"
#include "gridshield/load.hpp"

namespace gridshield {

enum class AttackKind { none, step, pulse, ramp, sinusoid };

inline std::string_view to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::none: return "none";
        case AttackKind::step: return "step";
        case AttackKind::pulse: return "pulse";
        case AttackKind::ramp: return "ramp";
        case AttackKind::sinusoid: return "sinusoid";
    }
    return "none";
}

inline AttackKind attack_kind_from_string(std::string_view s) {
    if (s == "none") return AttackKind::none;
    if (s == "step") return AttackKind::step;
    if (s == "pulse") return AttackKind::pulse;
    if (s == "ramp") return AttackKind::ramp;
    if (s == "sinusoid") return AttackKind::sinusoid;
    throw ValidationError("unknown attack kind '" + std::string(s) + "'");
}

/// False load data added to the load measurement channel.
struct AttackSpec {
    AttackKind kind{AttackKind::none};
    double magnitude_fraction{0.0};  // of the present true load
    double start{0.0};               // s
    double duration{0.0};            // s
    double ramp_rate{0.0};           // W/s
    double frequency{0.0};           // Hz

    void validate() const {
        if (!(duration >= 0)) throw ValidationError("attack: duration must be non-negative");
        if (!(magnitude_fraction >= 0)) throw ValidationError("attack: magnitude_fraction must be non-negative");
        if (!(start >= 0)) throw ValidationError("attack: start must be non-negative");
    }

    double end() const { return start + duration; }
};

inline double attack_signal(const AttackSpec& spec, double t, double p_l_true) {
    const double full = spec.magnitude_fraction * p_l_true;
    const bool in_window = t >= spec.start && t < spec.end();
    switch (spec.kind) {
        case AttackKind::none:
            return 0.0;
        case AttackKind::step:
            return t >= spec.start ? full : 0.0;
        case AttackKind::pulse:
            return in_window ? full : 0.0;
        case AttackKind::ramp:
            return in_window ? std::min(spec.ramp_rate * (t - spec.start), full) : 0.0;
        case AttackKind::sinusoid:
            return in_window ? full * std::sin(2.0 * std::numbers::pi * spec.frequency * (t - spec.start)) : 0.0;
    }
    return 0.0;
}

struct PowerMeasurements {
    std::vector<double> p_g;    // W, per generator
    double p_l_true{0.0};       // W
    double p_l_measured{0.0};   // W, p_l_true + w_L
    double p_b{0.0};            // W, + = discharging
    double timestamp{0.0};      // s

    double attack() const { return p_l_measured - p_l_true; }
};

/// Sources positive, demand positive: sum(p_g) + p_b - p_L(true).
/// Always evaluated on the true load; the attacked channel never enters.
inline double power_balance_residual(const PowerMeasurements& m) {
    double sources = m.p_b;
    for (double p : m.p_g) sources += p;
    return sources - m.p_l_true;
}

/// Generators, loads and one battery coupled at a single bus. Each generator
/// regulates its own terminal capacitor; the bus voltage seen by the loads and
/// by the battery inverter is the mean generator terminal voltage.
struct Microgrid {
    std::vector<GeneratorUnit> generators;
    std::vector<LoadUnit> loads;
    BatteryUnit battery;
    bool battery_connected{true};
    DqVector bus_voltage_ref{12000.0, 0.0};

    void validate() const {
        if (generators.empty()) throw ValidationError("microgrid: at least one generator required");
        if (loads.empty()) throw ValidationError("microgrid: at least one load required");
    }

    DqVector bus_voltage() const {
        DqVector sum{};
        for (const auto& g : generators) sum += g.state.v_c;
        return sum / static_cast<double>(generators.size());
    }

    double bus_omega_e() const {
        double sum = 0.0;
        for (const auto& g : generators) sum += g.omega_e();
        return sum / static_cast<double>(generators.size());
    }

    /// DC-link voltage of the battery inverter: the rectified bus magnitude.
    double dc_voltage() const { return norm(bus_voltage()); }

    double true_load_power() const {
        const DqVector v = bus_voltage();
        double p = 0.0;
        for (const auto& l : loads) p += 0.5 * dot(v, l.state.i_l);
        return p;
    }

    double battery_power() const { return battery_connected ? dc_voltage() * battery.state.i_b : 0.0; }
};

inline PowerMeasurements measure_powers(const Microgrid& grid, double t, const AttackSpec& attack = {}) {
    PowerMeasurements m;
    m.timestamp = t;
    m.p_g.reserve(grid.generators.size());
    for (const auto& g : grid.generators) m.p_g.push_back(g.active_power());
    m.p_l_true = grid.true_load_power();
    m.p_l_measured = m.p_l_true + attack_signal(attack, t, m.p_l_true);
    m.p_b = grid.battery_power();
    return m;
}

/// Current references realizing per-generator power setpoints (W) at bus
/// voltage v_c, oriented on the d-axis: i_r = (2 p / v_c.d, 0).
inline std::vector<DqVector> allocate_generator_current_refs(const std::vector<double>& dispatch,
                                                             const DqVector& v_c,
                                                             double v_nominal = 12000.0) {
    if (!(norm(v_c) >= 0.1 * v_nominal) || v_c.d == 0.0) {
        throw BusVoltageCollapse("bus voltage " + std::to_string(norm(v_c)) + " V below 10% of nominal");
    }
    std::vector<DqVector> refs;
    refs.reserve(dispatch.size());
    for (double p : dispatch) refs.push_back({2.0 * p / v_c.d, 0.0});
    return refs;
}

}  // namespace gridshield
