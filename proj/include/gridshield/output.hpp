#pragma once

// CSV and JSON artifacts. Numbers are written with 17 significant digits so
// repeated runs can be compared byte for byte.

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridshield/scenario.hpp"
#include "gridshield/sim.hpp"

namespace gridshield {

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    return out;
}

inline void write_timeseries_csv(const TimeSeriesLog& log, std::ostream& out) {
    for (std::size_t i = 0; i < log.columns.size(); ++i) out << (i ? "," : "") << log.columns[i];
    out << '\n';
    for (const auto& row : log.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_number(row[i]);
        out << '\n';
    }
}

inline void write_timeseries_csv(const TimeSeriesLog& log, const std::string& path) {
    auto out = open_output(path);
    write_timeseries_csv(log, out);
}

inline nlohmann::ordered_json metrics_json(const ScenarioConfig& s, const ScenarioResult& r) {
    const ScenarioOutcome& o = r.outcome;
    nlohmann::ordered_json j;
    j["label"] = s.label;
    j["rmse_tracking"] = o.rmse_tracking;
    j["max_frequency_deviation"] = o.max_frequency_deviation;
    j["max_voltage_deviation"] = o.max_voltage_deviation;
    j["soc_min"] = o.soc_min;
    j["soc_max"] = o.soc_max;
    j["infeasible_periods"] = o.infeasible_periods;
    j["dispatch_count"] = o.dispatch_count;
    j["max_balance_error_ratio"] = o.max_balance_error_ratio;
    j["max_abs_tracking_error"] = o.max_abs_tracking_error;
    j["max_attack_tracking_error"] = o.max_attack_tracking_error;
    j["max_residual_ratio"] = o.max_residual_ratio;
    j["use_battery"] = s.use_battery;
    j["scenario_hash"] = scenario_fingerprint(s);
    return j;
}

inline void write_metrics_json(const ScenarioConfig& s, const ScenarioResult& r, const std::string& path) {
    auto out = open_output(path);
    out << metrics_json(s, r).dump(2) << '\n';
}

inline void write_sweep_csv(const std::vector<SweepCell>& cells, std::ostream& out) {
    out << "level,battery,rmse_mw,infeasible_periods\n";
    for (const auto& c : cells) {
        out << format_number(c.level) << ',' << (c.battery ? "on" : "off") << ','
            << (c.failed ? std::string("failed") : format_number(c.rmse_mw)) << ',' << c.infeasible_periods << '\n';
    }
}

inline void write_sweep_csv(const std::vector<SweepCell>& cells, const std::string& path) {
    auto out = open_output(path);
    write_sweep_csv(cells, out);
}

}  // namespace gridshield
