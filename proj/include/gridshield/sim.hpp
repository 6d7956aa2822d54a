#pragma once

// Two-rate scenario execution: plant and primary control every dt (with the
// electrical states sub-stepped), energy management every ems_period.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gridshield/ems.hpp"
#include "gridshield/errors.hpp"
#include "gridshield/microgrid.hpp"
#include "gridshield/scenario.hpp"

namespace gridshield {

inline constexpr double kDivergenceLimit = 1e9;

/// Named columns over a uniform time grid.
struct TimeSeriesLog {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    bool empty() const { return rows.empty(); }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (columns[i] == name) return i;
        }
        throw Error("log has no column '" + name + "'");
    }

    std::vector<double> column(const std::string& name) const {
        const std::size_t c = index_of(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[c]);
        return out;
    }
};

/// Root mean square of the tracking_error column (W) over rows with
/// t in [t0, t1], in MW.
inline double rmse_tracking(const TimeSeriesLog& log, double t0, double t1) {
    if (log.empty() || !(t0 <= t1)) throw EmptyWindow("empty RMSE window");
    const std::size_t ct = log.index_of("t");
    const std::size_t ce = log.index_of("tracking_error");
    const double slack = 1e-9 * std::max(1.0, std::abs(t1));
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : log.rows) {
        if (r[ct] >= t0 - slack && r[ct] <= t1 + slack) {
            const double e = r[ce] / kWattsPerMegawatt;
            sum += e * e;
            ++count;
        }
    }
    if (count == 0) throw EmptyWindow("no log rows in [" + std::to_string(t0) + ", " + std::to_string(t1) + "]");
    return std::sqrt(sum / static_cast<double>(count));
}

/// Plant plus primary control. The EMS only touches the generator current
/// targets and the battery setpoint.
class World {
public:
    Microgrid grid;
    double t{0.0};
    double bus_voltage_nominal{12000.0};
    double soc_min{0.0};
    double soc_max{1.0};
    bool balancing{true};
    double battery_setpoint{0.0};  // W, from the EMS
    double battery_command{0.0};   // W, last applied
    double i_b_step_mean{0.0};     // A, mean battery current over the last dt

    World() = default;

    explicit World(const ScenarioConfig& s) {
        bus_voltage_nominal = s.bus_voltage;
        grid.bus_voltage_ref = {s.bus_voltage, 0.0};
        for (const auto& g : s.generators) {
            GeneratorUnit unit(s.generator_params(g), {s.omega_m_ref(g), grid.bus_voltage_ref, {}});
            unit.black_start(g.theta_init_fraction);
            grid.generators.push_back(unit);
        }
        for (const auto& l : s.loads) grid.loads.emplace_back(s.load_params(l), l.i_ref);
        grid.battery_connected = s.battery.present && s.use_battery;
        if (s.battery.present) grid.battery = BatteryUnit(s.battery.params, s.battery.soc0);
        soc_min = s.ems.soc_min;
        soc_max = s.ems.soc_max;
        balancing = s.battery.balancing;
        ref_from_.assign(grid.generators.size(), DqVector{});
        ref_to_ = ref_from_;
    }

    /// Ramps every generator current reference linearly to `targets` over
    /// `slew` seconds starting now.
    void set_generator_targets(const std::vector<DqVector>& targets, double slew) {
        for (std::size_t g = 0; g < grid.generators.size(); ++g) ref_from_[g] = grid.generators[g].refs.i_ref;
        ref_to_ = targets;
        slew_start_ = t;
        slew_time_ = slew;
    }

    const std::vector<DqVector>& generator_targets() const { return ref_to_; }

    /// Advances by dt in `substeps` equal explicit steps.
    void advance(double dt, int substeps) {
        const double h = dt / substeps;
        double charge = 0.0;
        for (int s = 0; s < substeps; ++s) {
            const double now = t + s * h;
            const double frac = slew_time_ > 0.0 ? std::clamp((now - slew_start_) / slew_time_, 0.0, 1.0) : 1.0;
            for (std::size_t g = 0; g < grid.generators.size(); ++g) {
                grid.generators[g].refs.i_ref = ref_from_[g] + frac * (ref_to_[g] - ref_from_[g]);
            }
            const DqVector v_bus = grid.bus_voltage();
            const double w_bus = grid.bus_omega_e();

            if (grid.battery_connected) {
                battery_command = battery_demand();
                const double v_dc = grid.dc_voltage();
                if (v_dc >= 0.1 * grid.battery.params.v_dc_nominal) {
                    grid.battery.realize_power(battery_command, v_dc, h);
                } else {
                    battery_command = 0.0;
                    grid.battery.idle(h);
                }
                charge += h * grid.battery.state.i_b;
            }
            for (auto& g : grid.generators) g.advance(h);
            for (auto& l : grid.loads) l.advance(h, v_bus, w_bus);
            check_divergence(now + h);
        }
        i_b_step_mean = charge / dt;
        t += dt;
    }

private:
    /// EMS setpoint plus, when balancing, the correction that closes the gap
    /// between true demand and generator output. Limited by rating and SoC.
    double battery_demand() const {
        double cmd = battery_setpoint;
        if (balancing) {
            double sources = 0.0;
            for (const auto& g : grid.generators) sources += g.active_power();
            cmd += grid.true_load_power() - sources - battery_setpoint;
        }
        const BatteryUnit& b = grid.battery;
        cmd = std::clamp(cmd, -b.params.p_max, b.params.p_max);
        if (b.state.soc <= soc_min && cmd > 0.0) cmd = 0.0;
        if (b.state.soc >= soc_max && cmd < 0.0) cmd = 0.0;
        return cmd;
    }

    void check_divergence(double when) const {
        auto bad = [](double x) { return !std::isfinite(x) || std::abs(x) > kDivergenceLimit; };
        auto fail = [when](const std::string& what) {
            throw NumericalDivergence(what + " left the admissible range at t = " + std::to_string(when) + " s");
        };
        for (std::size_t g = 0; g < grid.generators.size(); ++g) {
            const GeneratorState& s = grid.generators[g].state;
            const std::string who = "generator " + std::to_string(g + 1) + " ";
            if (bad(s.omega_m) || bad(s.pi_integral)) fail(who + "speed loop");
            if (bad(s.i.d) || bad(s.i.q) || bad(s.v_c.d) || bad(s.v_c.q)) fail(who + "electrical state");
            if (bad(s.v_f.d) || bad(s.v_f.q)) fail(who + "derivative filter");
            if (bad(s.theta_hat[0]) || bad(s.theta_hat[1]) || bad(s.theta_hat[2])) fail(who + "parameter estimate");
        }
        for (std::size_t l = 0; l < grid.loads.size(); ++l) {
            const DqVector& i = grid.loads[l].state.i_l;
            if (bad(i.d) || bad(i.q)) fail("load " + std::to_string(l + 1) + " current");
        }
        if (bad(grid.battery.state.v_p) || bad(grid.battery.state.i_b)) fail("battery");
    }

    std::vector<DqVector> ref_from_;
    std::vector<DqVector> ref_to_;
    double slew_start_{0.0};
    double slew_time_{0.0};
};

/// One plant step as a value transformation.
inline World step(World world, const SimConfig& config) {
    world.advance(config.dt, config.substeps);
    return world;
}

struct DispatchRecord {
    double t{0.0};
    bool startup{false};
    double demand_measured{0.0};  // W
    double demand_true{0.0};      // W
    std::vector<double> setpoints;  // W, per MPC source (generators, then battery)
    QpStatus status{QpStatus::optimal};
    bool fallback{false};
    bool held{false};
    double balance_error{0.0};  // W, |sum setpoints - measured demand|
    double solve_time{0.0};     // s, wall clock
};

struct ScenarioOutcome {
    double rmse_tracking{0.0};            // MW, post-startup window
    double max_frequency_deviation{0.0};  // rad/s, mechanical speed
    double max_voltage_deviation{0.0};    // V, terminal voltage magnitude
    double soc_min{0.0};
    double soc_max{0.0};
    int infeasible_periods{0};
    int dispatch_count{0};
    double max_balance_error_ratio{0.0};   // over solved MPC periods
    double max_abs_tracking_error{0.0};    // MW, post-startup window
    double max_attack_tracking_error{0.0}; // MW, during the attack window
    double max_residual_ratio{0.0};        // |residual| / true demand, post-startup
};

struct ScenarioResult {
    TimeSeriesLog log;
    ScenarioOutcome outcome;
    std::vector<DispatchRecord> dispatches;
};

/// Status code stored in the log: -1 startup hold, otherwise the QpStatus.
inline double status_code(const DispatchRecord& r) {
    return r.startup ? -1.0 : static_cast<double>(static_cast<int>(r.status));
}

inline std::vector<std::string> log_columns(const ScenarioConfig& s) {
    std::vector<std::string> c{"t"};
    for (const auto& g : s.generators) c.push_back("omega_m_" + g.name);
    for (const auto& g : s.generators) c.push_back("v_c_" + g.name);
    c.push_back("v_bus");
    for (const auto& g : s.generators) c.push_back("p_" + g.name);
    c.insert(c.end(), {"p_battery", "p_l_true", "p_l_measured", "w_l", "soc", "i_b"});
    for (const auto& g : s.generators) c.push_back("sp_" + g.name);
    c.insert(c.end(), {"sp_battery", "battery_command", "solver_status", "flagged", "tracking_error"});
    return c;
}

namespace detail {

inline std::vector<double> log_row(const World& w, const ScenarioConfig& s, const DispatchRecord& last) {
    const PowerMeasurements m = measure_powers(w.grid, w.t, s.attack);
    std::vector<double> r{w.t};
    for (const auto& g : w.grid.generators) r.push_back(g.state.omega_m);
    for (const auto& g : w.grid.generators) r.push_back(norm(g.state.v_c));
    r.push_back(norm(w.grid.bus_voltage()));
    for (double p : m.p_g) r.push_back(p);
    const std::size_t n_gen = s.generators.size();
    r.insert(r.end(), {m.p_b, m.p_l_true, m.p_l_measured, m.attack(), w.grid.battery.state.soc, w.i_b_step_mean});
    for (std::size_t g = 0; g < n_gen; ++g) r.push_back(g < last.setpoints.size() ? last.setpoints[g] : 0.0);
    r.push_back(last.setpoints.size() > n_gen ? last.setpoints[n_gen] : 0.0);
    r.push_back(w.grid.battery_connected ? w.battery_command : 0.0);
    r.push_back(status_code(last));
    r.push_back((last.fallback || last.held) ? 1.0 : 0.0);
    r.push_back(power_balance_residual(m));
    return r;
}

inline DispatchRecord startup_dispatch(World& w, const ScenarioConfig& s, const PowerMeasurements& m) {
    DispatchRecord rec;
    rec.startup = true;
    const DqVector v = w.grid.bus_voltage();
    std::vector<double> share(s.generators.size(), 0.0);
    if (norm(v) >= 0.1 * s.bus_voltage && v.d > 0.0) {
        double total = 0.0;
        for (const auto& g : s.generators) total += g.rating;
        for (std::size_t g = 0; g < share.size(); ++g) share[g] = m.p_l_measured * s.generators[g].rating / total;
        w.set_generator_targets(allocate_generator_current_refs(share, v, s.bus_voltage), s.sim.reference_slew);
    } else {
        w.set_generator_targets(std::vector<DqVector>(share.size()), s.sim.reference_slew);
    }
    w.battery_setpoint = 0.0;
    rec.setpoints = share;
    if (s.battery.present) rec.setpoints.push_back(0.0);
    return rec;
}

inline DispatchRecord mpc_dispatch(World& w, const ScenarioConfig& s, const MpcConfig& mpc,
                                   const PowerMeasurements& m, std::optional<DispatchResult>& previous) {
    DispatchRecord rec;
    const DispatchResult res =
        dispatch_step(mpc, m, w.grid.battery.state.soc, previous ? &*previous : nullptr, s.use_battery);
    rec.status = res.solver_status;
    rec.fallback = res.fallback;
    rec.held = res.held;
    rec.solve_time = res.solve_time;
    double total = 0.0;
    for (double p : res.setpoints) {
        rec.setpoints.push_back(p * kWattsPerMegawatt);
        total += p;
    }
    rec.balance_error = std::abs(total * kWattsPerMegawatt - m.p_l_measured);

    std::vector<double> gen_w;
    for (int i = 0; i < mpc.num_sources(); ++i) {
        if (mpc.sources[i].kind == SourceKind::generator) gen_w.push_back(res.setpoints[i] * kWattsPerMegawatt);
    }
    try {
        w.set_generator_targets(allocate_generator_current_refs(gen_w, w.grid.bus_voltage(), s.bus_voltage),
                                s.sim.reference_slew);
    } catch (const BusVoltageCollapse&) {
        // keep the previous references
    }
    const int b = mpc.battery_index();
    w.battery_setpoint = (b >= 0 && s.use_battery) ? res.setpoints[b] * kWattsPerMegawatt : 0.0;
    previous = res;
    return rec;
}

inline ScenarioOutcome summarize(const ScenarioConfig& s, const TimeSeriesLog& log,
                                 const std::vector<DispatchRecord>& dispatches) {
    ScenarioOutcome o;
    o.soc_min = o.soc_max = s.battery.present ? s.battery.soc0 : 0.0;
    o.dispatch_count = static_cast<int>(dispatches.size());
    for (const auto& d : dispatches) {
        if (d.fallback || d.held) {
            ++o.infeasible_periods;
        } else if (!d.startup && d.demand_measured > 0.0) {
            o.max_balance_error_ratio = std::max(o.max_balance_error_ratio, d.balance_error / d.demand_measured);
        }
    }
    if (log.empty()) return o;

    const std::size_t ct = log.index_of("t");
    const std::size_t cs = log.index_of("soc");
    const std::size_t ce = log.index_of("tracking_error");
    const std::size_t cl = log.index_of("p_l_true");
    const double t0 = s.sim.startup_time + s.sim.ems_period;
    for (const auto& r : log.rows) {
        o.soc_min = std::min(o.soc_min, r[cs]);
        o.soc_max = std::max(o.soc_max, r[cs]);
        if (r[ct] < t0) continue;
        for (std::size_t g = 0; g < s.generators.size(); ++g) {
            const double w_ref = s.omega_m_ref(s.generators[g]);
            o.max_frequency_deviation =
                std::max(o.max_frequency_deviation, std::abs(r[log.index_of("omega_m_" + s.generators[g].name)] - w_ref));
            o.max_voltage_deviation =
                std::max(o.max_voltage_deviation, std::abs(r[log.index_of("v_c_" + s.generators[g].name)] - s.bus_voltage));
        }
        const double e = std::abs(r[ce]);
        o.max_abs_tracking_error = std::max(o.max_abs_tracking_error, e / kWattsPerMegawatt);
        if (r[cl] > 0.0) o.max_residual_ratio = std::max(o.max_residual_ratio, e / r[cl]);
        if (s.attack.kind != AttackKind::none && r[ct] >= s.attack.start && r[ct] < s.attack.end()) {
            o.max_attack_tracking_error = std::max(o.max_attack_tracking_error, e / kWattsPerMegawatt);
        }
    }
    try {
        o.rmse_tracking = rmse_tracking(log, t0, s.sim.t_end);
    } catch (const EmptyWindow&) {
        o.rmse_tracking = 0.0;
    }
    return o;
}

}  // namespace detail

/// Runs a scenario to t_end. Dispatch runs at the start of every complete
/// EMS period, so it executes floor(t_end / ems_period) times.
inline ScenarioResult run_scenario(const ScenarioConfig& s) {
    s.validate();
    ScenarioResult out;
    out.log.columns = log_columns(s);
    World w(s);
    const MpcConfig mpc = s.mpc_config();
    const long n_steps = s.sim.total_steps();
    const long per_period = s.sim.steps_per_period();
    const double startup_end = s.sim.startup_time - 1e-9;

    std::optional<DispatchResult> previous;
    DispatchRecord last;
    last.startup = true;
    for (long k = 0; k < n_steps; ++k) {
        if (k % per_period == 0 && k + per_period <= n_steps) {
            w.t = static_cast<double>(k) * s.sim.dt;
            const PowerMeasurements m = measure_powers(w.grid, w.t, s.attack);
            last = w.t < startup_end ? detail::startup_dispatch(w, s, m) : detail::mpc_dispatch(w, s, mpc, m, previous);
            last.t = w.t;
            last.demand_measured = m.p_l_measured;
            last.demand_true = m.p_l_true;
            out.dispatches.push_back(last);
        }
        w.t = static_cast<double>(k) * s.sim.dt;
        w.advance(s.sim.dt, s.sim.substeps);
        w.t = static_cast<double>(k + 1) * s.sim.dt;
        if ((k + 1) % s.sim.log_decimation == 0) out.log.rows.push_back(detail::log_row(w, s, last));
    }
    out.outcome = detail::summarize(s, out.log, out.dispatches);
    return out;
}

struct SweepCell {
    double level{0.0};
    bool battery{true};
    double rmse_mw{0.0};
    int infeasible_periods{0};
    bool failed{false};
    std::string error;
};

/// Parallelism for sweeps: GRIDSHIELD_THREADS if set, else the hardware count.
inline int sweep_threads() {
    if (const char* env = std::getenv("GRIDSHIELD_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// The scenario used for one sweep cell: a pulse of the given level with the
/// base attack's timing.
inline ScenarioConfig sweep_scenario(const ScenarioConfig& base, double level, bool battery) {
    ScenarioConfig s = base;
    if (s.attack.kind == AttackKind::none) {
        s.attack.kind = AttackKind::pulse;
        if (s.attack.duration == 0.0) {
            s.attack.start = 10.0;
            s.attack.duration = 1.0;
        }
    }
    s.attack.magnitude_fraction = level;
    s.use_battery = battery && s.battery.present;
    return s;
}

/// RMSE over [start - 1 s, end + 3 s] for every level, battery on then off.
/// Failed runs are marked rather than aborting the sweep.
inline std::vector<SweepCell> sweep_attack_levels(const ScenarioConfig& base, const std::vector<double>& levels,
                                                  bool with_and_without_battery = true, int threads = 0) {
    if (levels.empty()) throw ValidationError("sweep: at least one level required");
    std::vector<SweepCell> cells;
    for (double level : levels) {
        SweepCell on;
        on.level = level;
        on.battery = base.use_battery && base.battery.present;
        cells.push_back(on);
        if (with_and_without_battery && on.battery) {
            SweepCell off = on;
            off.battery = false;
            cells.push_back(off);
        }
    }
    auto run_cell = [&base](SweepCell& c) {
        try {
            const ScenarioConfig s = sweep_scenario(base, c.level, c.battery);
            const ScenarioResult r = run_scenario(s);
            const double t0 = std::max(0.0, s.attack.start - 1.0);
            const double t1 = std::min(s.sim.t_end, s.attack.end() + 3.0);
            c.rmse_mw = rmse_tracking(r.log, t0, t1);
            c.infeasible_periods = r.outcome.infeasible_periods;
        } catch (const std::exception& e) {
            c.failed = true;
            c.error = e.what();
            c.rmse_mw = std::numeric_limits<double>::quiet_NaN();
        }
    };
    const int n_threads = std::min<int>(threads > 0 ? threads : sweep_threads(), static_cast<int>(cells.size()));
    if (n_threads <= 1) {
        for (auto& c : cells) run_cell(c);
        return cells;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) {
        pool.emplace_back([&] {
            for (std::size_t j = next++; j < cells.size(); j = next++) run_cell(cells[j]);
        });
    }
    for (auto& th : pool) th.join();
    return cells;
}

}  // namespace gridshield
