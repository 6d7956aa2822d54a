#pragma once

// Experiment description: plant blocks, EMS settings, attack and run control.
// All powers are in W here; the EMS converts to MW internally.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridshield/battery.hpp"
#include "gridshield/ems.hpp"
#include "gridshield/errors.hpp"
#include "gridshield/generator.hpp"
#include "gridshield/load.hpp"
#include "gridshield/microgrid.hpp"

namespace gridshield {

struct SimConfig {
    double dt{1e-3};            // s, plant step
    double ems_period{1.0};     // s
    double t_end{20.0};         // s
    std::uint64_t seed{1};
    int log_decimation{10};
    int substeps{50};           // electrical sub-steps per plant step
    double startup_time{2.0};   // s, black start before the MPC takes over
    double reference_slew{0.05};  // s, ramp time of generator current references

    void validate() const {
        if (!(dt > 0)) throw ValidationError("sim: dt must be positive");
        if (!(ems_period > 0)) throw ValidationError("sim: ems_period must be positive");
        const double ratio = ems_period / dt;
        if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
            throw ValidationError("sim: ems_period must be an integer multiple of dt");
        }
        if (!(t_end >= 0)) throw ValidationError("sim: t_end must be non-negative");
        if (log_decimation < 1) throw ValidationError("sim: log_decimation must be at least 1");
        if (substeps < 1) throw ValidationError("sim: substeps must be at least 1");
        if (!(startup_time >= 0)) throw ValidationError("sim: startup_time must be non-negative");
        if (!(reference_slew >= 0)) throw ValidationError("sim: reference_slew must be non-negative");
    }

    long steps_per_period() const { return std::lround(ems_period / dt); }
    long total_steps() const { return std::lround(std::floor(t_end / dt + 1e-9)); }
};

struct GeneratorBlock {
    std::string name;
    GeneratorParams params;
    double rating{0.0};  // W
    double cost_a{0.0};
    double cost_b{0.0};
    double cost_c{0.0};
    double p_min{0.0};   // W
    double p_max{0.0};   // W
    double ramp{0.0};    // W per EMS step
    double theta_init_fraction{0.5};
    bool relative_adaptation{true};
    double torque_limit_factor{3.0};  // x rated torque
};

struct LoadBlock {
    std::string name;
    LoadParams params;
    DqVector i_ref{};
    bool auto_rho{true};  // design rho from worst-case disturbance
};

struct BatteryBlock {
    bool present{true};
    BatteryParams params;
    double soc0{0.8};
    double cost_a{1.0};
    double cost_b{0.0};
    double cost_c{0.0};
    double p_min{0.0};  // W
    double p_max{0.0};  // W
    double ramp{0.0};   // W per EMS step
    bool balancing{true};  // fast correction of the bus imbalance between EMS periods
};

struct EmsBlock {
    int horizon{5};
    double soc_min{0.1};
    double soc_max{0.9};
    double soft_penalty{1e6};
    double tolerance{1e-8};
    int max_iterations{20000};
};

struct ScenarioConfig {
    std::string label{"scenario"};
    std::string output_dir{"."};
    SimConfig sim;
    double bus_voltage{12000.0};  // V, d-axis reference
    double frequency{60.0};       // Hz
    std::vector<GeneratorBlock> generators;
    std::vector<LoadBlock> loads;
    BatteryBlock battery;
    EmsBlock ems;
    AttackSpec attack;
    bool use_battery{true};

    double omega_m_ref(const GeneratorBlock& g) const { return synchronous_speed(frequency, g.params.poles); }
    double omega_e_ref() const { return 2.0 * std::numbers::pi * frequency; }

    /// Generator parameters with the derived gains filled in.
    GeneratorParams generator_params(const GeneratorBlock& g) const {
        GeneratorParams p = g.params;
        if (g.relative_adaptation) p.gamma_scale = relative_gamma_scale(p);
        const double rated_torque = 2.0 * g.rating / omega_e_ref();
        p.torque_max = g.torque_limit_factor * rated_torque;
        return p;
    }

    /// Load parameters with rho designed for 120% of the reference current,
    /// 110% of bus voltage and 110% of nominal frequency.
    LoadParams load_params(const LoadBlock& l) const {
        LoadParams p = l.params;
        if (l.auto_rho) {
            const SwitchingGain g = design_switching_gain(p.r_l, p.l_l, 1.2 * norm(l.i_ref), 1.1 * bus_voltage,
                                                          1.1 * omega_e_ref());
            p.disturbance_bound = g.disturbance_bound;
            p.rho = g.rho;
        }
        return p;
    }

    MpcConfig mpc_config() const {
        MpcConfig m;
        m.horizon = ems.horizon;
        m.step_seconds = sim.ems_period;
        m.soc_min = ems.soc_min;
        m.soc_max = ems.soc_max;
        m.soft_penalty = ems.soft_penalty;
        m.tolerance = ems.tolerance;
        m.max_iterations = ems.max_iterations;
        m.q_b = battery.params.q_b;
        m.v_dc_nominal = battery.params.v_dc_nominal;
        for (const auto& g : generators) {
            m.sources.push_back({g.name, SourceKind::generator, g.cost_a, g.cost_b, g.cost_c, g.p_min / kWattsPerMegawatt,
                                 g.p_max / kWattsPerMegawatt, g.ramp / kWattsPerMegawatt});
        }
        if (battery.present) {
            m.sources.push_back({"battery", SourceKind::battery, battery.cost_a, battery.cost_b, battery.cost_c,
                                 battery.p_min / kWattsPerMegawatt, battery.p_max / kWattsPerMegawatt,
                                 battery.ramp / kWattsPerMegawatt});
        }
        return m;
    }

    void validate() const {
        sim.validate();
        if (label.empty()) throw ValidationError("label must not be empty");
        if (!(bus_voltage > 0)) throw ValidationError("bus: voltage must be positive");
        if (!(frequency > 0)) throw ValidationError("bus: frequency must be positive");
        if (generators.empty()) throw ValidationError("at least one generator required");
        if (loads.empty()) throw ValidationError("at least one load required");
        if (!(ems.soc_min < ems.soc_max)) {
            throw ValidationError("SoC bound invariant violated: soc_min must be less than soc_max");
        }
        if (!(ems.soc_min >= 0 && ems.soc_max <= 1)) {
            throw ValidationError("SoC bound invariant violated: bounds must lie in [0, 1]");
        }
        for (const auto& g : generators) {
            const std::string where = "generator '" + g.name + "': ";
            try {
                generator_params(g).validate();
            } catch (const ValidationError& e) {
                throw ValidationError(where + e.what());
            }
            if (!(g.rating > 0)) throw ValidationError(where + "rating must be positive");
            if (!(g.theta_init_fraction >= 0)) throw ValidationError(where + "theta_init_fraction must be non-negative");
            if (!(g.torque_limit_factor > 0)) throw ValidationError(where + "torque_limit_factor must be positive");
        }
        for (const auto& l : loads) {
            try {
                load_params(l).validate();
            } catch (const ValidationError& e) {
                throw ValidationError("load '" + l.name + "': " + e.what());
            }
        }
        if (battery.present) {
            battery.params.validate();
            if (!(battery.soc0 >= ems.soc_min && battery.soc0 <= ems.soc_max)) {
                throw ValidationError("battery: soc0 must lie within [soc_min, soc_max]");
            }
        }
        attack.validate();
        try {
            mpc_config().validate();
        } catch (const ConfigInvalid& e) {
            throw ValidationError(e.what());
        }
    }
};

// Canonical JSON form, used for metrics and fingerprints.

inline nlohmann::ordered_json to_json(const DqVector& v) { return nlohmann::ordered_json::array({v.d, v.q}); }

inline nlohmann::ordered_json to_json(const ScenarioConfig& s) {
    using J = nlohmann::ordered_json;
    J sim = {{"dt", s.sim.dt},
             {"ems_period", s.sim.ems_period},
             {"t_end", s.sim.t_end},
             {"seed", s.sim.seed},
             {"log_decimation", s.sim.log_decimation},
             {"substeps", s.sim.substeps},
             {"startup_time", s.sim.startup_time},
             {"reference_slew", s.sim.reference_slew}};
    J gens = J::array();
    for (const auto& g : s.generators) {
        const GeneratorParams& p = g.params;
        gens.push_back({{"name", g.name},
                        {"rating", g.rating},
                        {"cost", {g.cost_a, g.cost_b, g.cost_c}},
                        {"p_min", g.p_min},
                        {"p_max", g.p_max},
                        {"ramp", g.ramp},
                        {"tau", p.tau},
                        {"damping", p.damping},
                        {"r", p.r},
                        {"l", p.l},
                        {"c", p.c},
                        {"poles", p.poles},
                        {"k_p", p.k_p},
                        {"k_i", p.k_i},
                        {"k", p.k},
                        {"alpha", p.alpha},
                        {"gamma", p.gamma},
                        {"k1", p.k1},
                        {"derivative", p.derivative_source == DerivativeSource::exact ? "exact" : "filter"},
                        {"relative_adaptation", g.relative_adaptation},
                        {"theta_init_fraction", g.theta_init_fraction},
                        {"torque_limit_factor", g.torque_limit_factor}});
    }
    J loads = J::array();
    for (const auto& l : s.loads) {
        const LoadParams p = s.load_params(l);
        loads.push_back({{"name", l.name},
                         {"i_ref", to_json(l.i_ref)},
                         {"r_l", p.r_l},
                         {"l_l", p.l_l},
                         {"k", p.k},
                         {"rho", p.rho},
                         {"disturbance_bound", p.disturbance_bound},
                         {"boundary_layer", p.boundary_layer}});
    }
    const BatteryBlock& b = s.battery;
    J bat = {{"present", b.present},
             {"r_b", b.params.r_b},
             {"r_p", b.params.r_p},
             {"c_p", b.params.c_p},
             {"q_b", b.params.q_b},
             {"beta1", b.params.beta1},
             {"beta2", b.params.beta2},
             {"rating", b.params.p_max},
             {"v_dc_nominal", b.params.v_dc_nominal},
             {"soc0", b.soc0},
             {"cost", {b.cost_a, b.cost_b, b.cost_c}},
             {"p_min", b.p_min},
             {"p_max", b.p_max},
             {"ramp", b.ramp},
             {"balancing", b.balancing}};
    J ems = {{"horizon", s.ems.horizon},
             {"soc_min", s.ems.soc_min},
             {"soc_max", s.ems.soc_max},
             {"soft_penalty", s.ems.soft_penalty},
             {"tolerance", s.ems.tolerance},
             {"max_iterations", s.ems.max_iterations}};
    J attack = {{"kind", std::string(to_string(s.attack.kind))},
                {"magnitude", s.attack.magnitude_fraction},
                {"start", s.attack.start},
                {"duration", s.attack.duration},
                {"ramp_rate", s.attack.ramp_rate},
                {"frequency", s.attack.frequency}};
    return J{{"label", s.label},
             {"sim", sim},
             {"bus", {{"voltage", s.bus_voltage}, {"frequency", s.frequency}}},
             {"generators", gens},
             {"loads", loads},
             {"battery", bat},
             {"ems", ems},
             {"attack", attack},
             {"use_battery", s.use_battery}};
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) out[i] = digits[v & 0xf];
    return out;
}

/// Fingerprint per top-level section plus one over the whole description.
/// The output location is not part of it.
inline nlohmann::ordered_json scenario_fingerprint(const ScenarioConfig& s) {
    const nlohmann::ordered_json doc = to_json(s);
    nlohmann::ordered_json sections;
    for (auto it = doc.begin(); it != doc.end(); ++it) sections[it.key()] = hex64(fnv1a64(it.value().dump()));
    return {{"sections", sections}, {"total", hex64(fnv1a64(doc.dump()))}};
}

}  // namespace gridshield
