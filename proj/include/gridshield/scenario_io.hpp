#pragma once

// Scenario files: YAML with a fixed schema. Unknown keys are rejected.

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <yaml-cpp/yaml.h>

#include "gridshield/scenario.hpp"

namespace gridshield {

namespace detail {

inline std::string at_line(const YAML::Node& n) {
    const YAML::Mark m = n.Mark();
    return m.line >= 0 ? "line " + std::to_string(m.line + 1) + ": " : "";
}

inline void require_map(const YAML::Node& n, const std::string& what) {
    if (!n.IsMap()) throw ParseError(at_line(n) + "'" + what + "' must be a mapping");
}

inline void check_keys(const YAML::Node& n, const std::string& what, std::initializer_list<const char*> allowed) {
    require_map(n, what);
    for (const auto& kv : n) {
        const std::string key = kv.first.as<std::string>();
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ParseError(at_line(kv.first) + "unknown key '" + key + "' in '" + what + "'");
    }
}

template <class T>
void read(const YAML::Node& parent, const char* key, T& out, const std::string& what) {
    const YAML::Node n = parent[key];
    if (!n) return;
    try {
        out = n.as<T>();
    } catch (const YAML::Exception&) {
        throw ParseError(at_line(n) + "field '" + what + "." + key + "' has the wrong type");
    }
}

template <class T>
void read_required(const YAML::Node& parent, const char* key, T& out, const std::string& what) {
    if (!parent[key]) throw ParseError(at_line(parent) + "missing required field '" + what + "." + key + "'");
    read(parent, key, out, what);
}

inline DqVector read_dq(const YAML::Node& n, const std::string& what) {
    if (!n.IsSequence() || n.size() != 2) throw ParseError(at_line(n) + "'" + what + "' must be [d, q]");
    try {
        return {n[0].as<double>(), n[1].as<double>()};
    } catch (const YAML::Exception&) {
        throw ParseError(at_line(n) + "'" + what + "' must hold two numbers");
    }
}

inline void read_cost(const YAML::Node& parent, double& a, double& b, double& c, const std::string& what) {
    const YAML::Node n = parent["cost"];
    if (!n) return;
    if (!n.IsSequence() || n.size() != 3) throw ParseError(at_line(n) + "'" + what + ".cost' must be [a, b, c]");
    try {
        a = n[0].as<double>();
        b = n[1].as<double>();
        c = n[2].as<double>();
    } catch (const YAML::Exception&) {
        throw ParseError(at_line(n) + "'" + what + ".cost' must hold three numbers");
    }
}

inline GeneratorBlock parse_generator(const YAML::Node& n, std::size_t index) {
    const std::string what = "generators[" + std::to_string(index) + "]";
    check_keys(n, what,
               {"name", "rating", "cost", "p_min", "p_max", "ramp", "tau", "damping", "r", "l", "c", "poles", "k_p",
                "k_i", "k", "alpha", "gamma", "k1", "derivative", "relative_adaptation", "theta_init_fraction",
                "torque_limit_factor"});
    GeneratorBlock g;
    g.name = "g" + std::to_string(index + 1);
    read(n, "name", g.name, what);
    read_required(n, "rating", g.rating, what);
    read_cost(n, g.cost_a, g.cost_b, g.cost_c, what);
    g.p_min = 0.05 * g.rating;
    g.p_max = 0.95 * g.rating;
    g.ramp = 0.1 * g.rating;
    read(n, "p_min", g.p_min, what);
    read(n, "p_max", g.p_max, what);
    read(n, "ramp", g.ramp, what);
    GeneratorParams& p = g.params;
    read(n, "tau", p.tau, what);
    read(n, "damping", p.damping, what);
    read(n, "r", p.r, what);
    read(n, "l", p.l, what);
    read(n, "c", p.c, what);
    read(n, "poles", p.poles, what);
    read(n, "k_p", p.k_p, what);
    read(n, "k_i", p.k_i, what);
    read(n, "k", p.k, what);
    read(n, "alpha", p.alpha, what);
    read(n, "gamma", p.gamma, what);
    read(n, "k1", p.k1, what);
    std::string derivative = "filter";
    read(n, "derivative", derivative, what);
    if (derivative == "filter") {
        p.derivative_source = DerivativeSource::filter;
    } else if (derivative == "exact") {
        p.derivative_source = DerivativeSource::exact;
    } else {
        throw ParseError(at_line(n["derivative"]) + "'" + what + ".derivative' must be 'filter' or 'exact'");
    }
    read(n, "relative_adaptation", g.relative_adaptation, what);
    read(n, "theta_init_fraction", g.theta_init_fraction, what);
    read(n, "torque_limit_factor", g.torque_limit_factor, what);
    return g;
}

inline LoadBlock parse_load(const YAML::Node& n, std::size_t index) {
    const std::string what = "loads[" + std::to_string(index) + "]";
    check_keys(n, what, {"name", "i_ref", "r_l", "l_l", "k", "rho", "disturbance_bound", "boundary_layer"});
    LoadBlock l;
    l.name = "l" + std::to_string(index + 1);
    read(n, "name", l.name, what);
    if (!n["i_ref"]) throw ParseError(at_line(n) + "missing required field '" + what + ".i_ref'");
    l.i_ref = read_dq(n["i_ref"], what + ".i_ref");
    read(n, "r_l", l.params.r_l, what);
    read(n, "l_l", l.params.l_l, what);
    read(n, "k", l.params.k, what);
    l.params.boundary_layer = 25.0;
    read(n, "boundary_layer", l.params.boundary_layer, what);
    if (n["rho"]) {
        l.auto_rho = false;
        read(n, "rho", l.params.rho, what);
        read_required(n, "disturbance_bound", l.params.disturbance_bound, what);
    } else if (n["disturbance_bound"]) {
        throw ParseError(at_line(n["disturbance_bound"]) + "'" + what + ".disturbance_bound' requires 'rho'");
    }
    return l;
}

inline BatteryBlock parse_battery(const YAML::Node& n) {
    const std::string what = "battery";
    check_keys(n, what,
               {"present", "r_b", "r_p", "c_p", "q_b", "beta1", "beta2", "rating", "v_dc_nominal", "soc0", "cost",
                "p_min", "p_max", "ramp", "balancing"});
    BatteryBlock b;
    read(n, "present", b.present, what);
    read(n, "r_b", b.params.r_b, what);
    read(n, "r_p", b.params.r_p, what);
    read(n, "c_p", b.params.c_p, what);
    read(n, "q_b", b.params.q_b, what);
    read(n, "beta1", b.params.beta1, what);
    read(n, "beta2", b.params.beta2, what);
    read(n, "rating", b.params.p_max, what);
    read(n, "v_dc_nominal", b.params.v_dc_nominal, what);
    read(n, "soc0", b.soc0, what);
    read_cost(n, b.cost_a, b.cost_b, b.cost_c, what);
    b.p_min = -0.95 * b.params.p_max;
    b.p_max = 0.95 * b.params.p_max;
    b.ramp = 0.95 * b.params.p_max;
    read(n, "p_min", b.p_min, what);
    read(n, "p_max", b.p_max, what);
    read(n, "ramp", b.ramp, what);
    read(n, "balancing", b.balancing, what);
    return b;
}

}  // namespace detail

/// Parses scenario text. `source` names the input in diagnostics.
inline ScenarioConfig parse_scenario_text(const std::string& text, const std::string& source = "<scenario>") {
    using namespace detail;
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ParseError(source + ": line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    if (!root || root.IsNull()) throw ParseError(source + ": empty scenario");
    try {
        check_keys(root, "scenario",
                   {"label", "output_dir", "sim", "bus", "generators", "loads", "battery", "ems", "attack",
                    "use_battery"});
        ScenarioConfig s;
        read(root, "label", s.label, "scenario");
        read(root, "output_dir", s.output_dir, "scenario");
        read(root, "use_battery", s.use_battery, "scenario");

        if (const YAML::Node n = root["sim"]) {
            check_keys(n, "sim",
                       {"dt", "ems_period", "t_end", "seed", "log_decimation", "substeps", "startup_time",
                        "reference_slew"});
            read(n, "dt", s.sim.dt, "sim");
            read(n, "ems_period", s.sim.ems_period, "sim");
            read(n, "t_end", s.sim.t_end, "sim");
            read(n, "seed", s.sim.seed, "sim");
            read(n, "log_decimation", s.sim.log_decimation, "sim");
            read(n, "substeps", s.sim.substeps, "sim");
            read(n, "startup_time", s.sim.startup_time, "sim");
            read(n, "reference_slew", s.sim.reference_slew, "sim");
        }
        if (const YAML::Node n = root["bus"]) {
            check_keys(n, "bus", {"voltage", "frequency"});
            read(n, "voltage", s.bus_voltage, "bus");
            read(n, "frequency", s.frequency, "bus");
        }
        const YAML::Node gens = root["generators"];
        if (!gens || !gens.IsSequence()) throw ParseError(at_line(root) + "'generators' must be a list");
        for (std::size_t i = 0; i < gens.size(); ++i) s.generators.push_back(parse_generator(gens[i], i));
        const YAML::Node loads = root["loads"];
        if (!loads || !loads.IsSequence()) throw ParseError(at_line(root) + "'loads' must be a list");
        for (std::size_t i = 0; i < loads.size(); ++i) s.loads.push_back(parse_load(loads[i], i));
        if (const YAML::Node n = root["battery"]) {
            s.battery = parse_battery(n);
        } else {
            s.battery.present = false;
        }
        if (const YAML::Node n = root["ems"]) {
            check_keys(n, "ems", {"horizon", "soc_min", "soc_max", "soft_penalty", "tolerance", "max_iterations"});
            read(n, "horizon", s.ems.horizon, "ems");
            read(n, "soc_min", s.ems.soc_min, "ems");
            read(n, "soc_max", s.ems.soc_max, "ems");
            read(n, "soft_penalty", s.ems.soft_penalty, "ems");
            read(n, "tolerance", s.ems.tolerance, "ems");
            read(n, "max_iterations", s.ems.max_iterations, "ems");
        }
        if (const YAML::Node n = root["attack"]) {
            check_keys(n, "attack", {"kind", "magnitude", "start", "duration", "ramp_rate", "frequency"});
            std::string kind = "none";
            read(n, "kind", kind, "attack");
            try {
                s.attack.kind = attack_kind_from_string(kind);
            } catch (const ValidationError& e) {
                throw ParseError(at_line(n["kind"]) + e.what());
            }
            read(n, "magnitude", s.attack.magnitude_fraction, "attack");
            read(n, "start", s.attack.start, "attack");
            read(n, "duration", s.attack.duration, "attack");
            read(n, "ramp_rate", s.attack.ramp_rate, "attack");
            read(n, "frequency", s.attack.frequency, "attack");
        }
        if (!s.battery.present) s.use_battery = false;
        s.validate();
        return s;
    } catch (const ParseError& e) {
        throw ParseError(source + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(source + ": " + e.what());
    } catch (const YAML::Exception& e) {
        throw ParseError(source + ": line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
}

inline ScenarioConfig parse_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario_text(buf.str(), path);
}

}  // namespace gridshield
