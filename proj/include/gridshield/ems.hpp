#pragma once

// Receding-horizon energy manager. Each period it builds a QP over the next
// `horizon` steps from the present (possibly falsified) measurements and
// applies the first planned step.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "gridshield/errors.hpp"
#include "gridshield/microgrid.hpp"
#include "gridshield/qp.hpp"

namespace gridshield {

inline constexpr double kWattsPerMegawatt = 1e6;

enum class SourceKind { generator, battery };

inline std::string_view to_string(SourceKind k) { return k == SourceKind::battery ? "battery" : "generator"; }

/// Cost C(p) = a p^2 + b p + c with p in MW.
struct SourceSpec {
    std::string name;
    SourceKind kind{SourceKind::generator};
    double cost_a{0.0};  // $/h/MW^2
    double cost_b{0.0};  // $/h/MW
    double cost_c{0.0};  // $/h
    double p_min{0.0};   // MW
    double p_max{0.0};   // MW
    double ramp{0.0};    // MW per EMS step

    void validate() const {
        if (!(p_min <= p_max)) throw ConfigInvalid("source '" + name + "': p_min must not exceed p_max");
        if (!(ramp > 0)) throw ConfigInvalid("source '" + name + "': ramp must be positive");
        if (!(cost_a >= 0)) throw ConfigInvalid("source '" + name + "': cost_a must be non-negative");
    }

    double cost(double p_mw) const { return cost_a * p_mw * p_mw + cost_b * p_mw + cost_c; }
    double marginal_cost(double p_mw) const { return 2.0 * cost_a * p_mw + cost_b; }
};

struct MpcConfig {
    int horizon{5};
    double step_seconds{1.0};
    double soc_min{0.1};
    double soc_max{0.9};
    std::vector<SourceSpec> sources;
    double q_b{25.0};            // A h
    double v_dc_nominal{12000.0};  // V
    double soft_penalty{1e6};    // weight on (sum p - demand)^2 in the fallback
    double tolerance{1e-8};
    int max_iterations{20000};

    void validate() const {
        if (horizon < 1) throw ConfigInvalid("mpc: horizon must be at least 1");
        if (!(step_seconds > 0)) throw ConfigInvalid("mpc: step_seconds must be positive");
        if (!(soc_min >= 0 && soc_min < soc_max && soc_max <= 1)) {
            throw ConfigInvalid("mpc: SoC bounds must satisfy 0 <= soc_min < soc_max <= 1");
        }
        if (sources.empty()) throw ConfigInvalid("mpc: at least one source required");
        int batteries = 0;
        for (const auto& s : sources) {
            s.validate();
            if (s.kind == SourceKind::battery) ++batteries;
        }
        if (batteries > 1) throw ConfigInvalid("mpc: at most one battery source supported");
        if (batteries == 1 && !(q_b > 0 && v_dc_nominal > 0)) {
            throw ConfigInvalid("mpc: q_b and v_dc_nominal must be positive");
        }
        if (!(soft_penalty > 0)) throw ConfigInvalid("mpc: soft_penalty must be positive");
    }

    int num_sources() const { return static_cast<int>(sources.size()); }

    int battery_index() const {
        for (int i = 0; i < num_sources(); ++i) {
            if (sources[i].kind == SourceKind::battery) return i;
        }
        return -1;
    }

    int num_generators() const { return num_sources() - (battery_index() >= 0 ? 1 : 0); }

    /// SoC drop per MW held for one step: T_s / (3600 Q_b v_dc), in 1/MW.
    double soc_per_mw_step() const { return step_seconds * kWattsPerMegawatt / (3600.0 * q_b * v_dc_nominal); }
};

/// Row and variable counts of the QP built for a configuration. Variables
/// are source-major: index i * horizon + k.
struct MpcLayout {
    int variables{0};
    int equalities{0};
    int box_rows{0};   // finite lower and upper bounds, counted as rows
    int ramp_rows{0};  // A_in rows [0, ramp_rows)
    int soc_rows{0};   // A_in rows [ramp_rows, ramp_rows + soc_rows)
};

inline MpcLayout mpc_layout(const MpcConfig& config, bool soft = false) {
    MpcLayout l;
    l.variables = config.num_sources() * config.horizon;
    l.equalities = soft ? 0 : config.horizon;
    l.box_rows = 2 * l.variables;
    l.ramp_rows = 2 * l.variables;
    l.soc_rows = config.battery_index() >= 0 ? 2 * config.horizon : 0;
    return l;
}

/// Measured present output (MW) of source i: generators in order, then the battery.
inline double measured_output_mw(const MpcConfig& config, const PowerMeasurements& m, int i) {
    if (config.sources[i].kind == SourceKind::battery) return m.p_b / kWattsPerMegawatt;
    int g = 0;
    for (int j = 0; j < i; ++j) {
        if (config.sources[j].kind == SourceKind::generator) ++g;
    }
    if (g >= static_cast<int>(m.p_g.size())) throw ConfigInvalid("mpc: fewer generator measurements than sources");
    return m.p_g[g] / kWattsPerMegawatt;
}

/// QP form of the dispatch problem. With `soft` the balance equality is
/// replaced by the penalty soft_penalty * (sum_i p_ik - D)^2.
inline QuadraticProgram build_mpc_qp(const MpcConfig& config, const PowerMeasurements& measured, double soc_now,
                                     bool use_battery, bool soft = false) {
    config.validate();
    if (!(soc_now >= 0.0 && soc_now <= 1.0)) throw ConfigInvalid("mpc: soc_now outside [0, 1]");
    const MpcLayout layout = mpc_layout(config, soft);
    const int h = config.horizon;
    const int ns = config.num_sources();
    const int n = layout.variables;
    const int b = config.battery_index();
    const double demand = measured.p_l_measured / kWattsPerMegawatt;

    auto qp = QuadraticProgram::with_dimensions(n, layout.equalities, layout.ramp_rows + layout.soc_rows);
    for (int i = 0; i < ns; ++i) {
        const SourceSpec& s = config.sources[i];
        const bool off = (i == b && !use_battery);
        for (int k = 0; k < h; ++k) {
            const int v = i * h + k;
            qp.h(v, v) = 2.0 * s.cost_a;
            qp.f[v] = s.cost_b;
            qp.lower[v] = off ? 0.0 : s.p_min;
            qp.upper[v] = off ? 0.0 : s.p_max;
        }
    }

    for (int k = 0; k < h; ++k) {
        if (soft) {
            for (int i = 0; i < ns; ++i) {
                qp.f[i * h + k] -= 2.0 * config.soft_penalty * demand;
                for (int j = 0; j < ns; ++j) qp.h(i * h + k, j * h + k) += 2.0 * config.soft_penalty;
            }
        } else {
            for (int i = 0; i < ns; ++i) qp.a_eq(k, i * h + k) = 1.0;
            qp.b_eq[k] = demand;
        }
    }

    // Ramp rows: row 2v bounds the rise, row 2v+1 the fall.
    for (int i = 0; i < ns; ++i) {
        const double r = config.sources[i].ramp;
        const double p0 = measured_output_mw(config, measured, i);
        for (int k = 0; k < h; ++k) {
            const int v = i * h + k;
            qp.a_in(2 * v, v) = 1.0;
            qp.a_in(2 * v + 1, v) = -1.0;
            if (k == 0) {
                qp.b_in[2 * v] = r + p0;
                qp.b_in[2 * v + 1] = r - p0;
            } else {
                qp.a_in(2 * v, v - 1) = -1.0;
                qp.a_in(2 * v + 1, v - 1) = 1.0;
                qp.b_in[2 * v] = r;
                qp.b_in[2 * v + 1] = r;
            }
        }
    }

    // SoC rows: s_k = s0 - kappa * cumsum(p_b) kept in [soc_min, soc_max].
    if (b >= 0) {
        const double kappa = config.soc_per_mw_step();
        for (int k = 0; k < h; ++k) {
            const int row = layout.ramp_rows + 2 * k;
            for (int j = 0; j <= k; ++j) {
                qp.a_in(row, b * h + j) = kappa;
                qp.a_in(row + 1, b * h + j) = -kappa;
            }
            qp.b_in[row] = soc_now - config.soc_min;
            qp.b_in[row + 1] = config.soc_max - soc_now;
        }
    }
    return qp;
}

struct DispatchResult {
    std::vector<double> setpoints;                     // MW, first planned step per source
    std::vector<std::vector<double>> planned;          // MW, per source over the horizon
    std::vector<double> planned_soc;                   // after each planned step
    QpStatus solver_status{QpStatus::max_iterations};  // of the QP whose answer was applied
    bool fallback{false};  // soft power balance was used
    bool held{false};      // both solves failed; measured outputs held
    double solve_time{0.0};  // s, wall clock; excluded from logs
    std::vector<int> active_set;

    bool flagged() const { return fallback || held; }
};

/// Moves an active set one step forward in time so it can seed the next solve.
inline std::vector<int> shift_active_set(const std::vector<int>& active, const MpcConfig& config, bool soft) {
    const MpcLayout l = mpc_layout(config, soft);
    const int h = config.horizon;
    const int mi = l.ramp_rows + l.soc_rows;
    const int n = l.variables;
    std::vector<int> out;
    auto shift_var = [h](int v) { return (v % h) == 0 ? v : v - 1; };
    for (int idx : active) {
        if (idx < l.ramp_rows) {
            out.push_back(2 * shift_var(idx / 2) + idx % 2);
        } else if (idx < mi) {
            const int k = (idx - l.ramp_rows) / 2;
            out.push_back(l.ramp_rows + 2 * std::max(k - 1, 0) + (idx - l.ramp_rows) % 2);
        } else if (idx < mi + n) {
            out.push_back(mi + shift_var(idx - mi));
        } else {
            out.push_back(mi + n + shift_var(idx - mi - n));
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

namespace detail {
inline void fill_plan(DispatchResult& r, const MpcConfig& config, const VectorXd& x, double soc_now) {
    const int h = config.horizon;
    const int ns = config.num_sources();
    r.setpoints.assign(ns, 0.0);
    r.planned.assign(ns, std::vector<double>(h, 0.0));
    for (int i = 0; i < ns; ++i) {
        for (int k = 0; k < h; ++k) r.planned[i][k] = x[i * h + k];
        r.setpoints[i] = r.planned[i][0];
    }
    r.planned_soc.assign(h, soc_now);
    const int b = config.battery_index();
    double s = soc_now;
    for (int k = 0; k < h; ++k) {
        if (b >= 0) s -= config.soc_per_mw_step() * r.planned[b][k];
        r.planned_soc[k] = s;
    }
}
}  // namespace detail

/// One EMS period. Falls back to a soft power balance when the hard problem
/// is not solved, and to holding the measured outputs if that fails too.
inline DispatchResult dispatch_step(const MpcConfig& config, const PowerMeasurements& measured, double soc_now,
                                    const DispatchResult* previous, bool use_battery) {
    const auto started = std::chrono::steady_clock::now();
    DispatchResult r;
    SolveOptions options;
    options.tolerance = config.tolerance;
    options.max_iterations = config.max_iterations;
    if (previous != nullptr && !previous->flagged()) {
        options.warm_start = shift_active_set(previous->active_set, config, false);
    }

    QpSolution sol = solve(build_mpc_qp(config, measured, soc_now, use_battery, false), options);
    if (sol.status != QpStatus::optimal) {
        options.warm_start.clear();
        sol = solve(build_mpc_qp(config, measured, soc_now, use_battery, true), options);
        r.fallback = true;
    }
    r.solver_status = sol.status;
    if (sol.status == QpStatus::optimal) {
        detail::fill_plan(r, config, sol.x, soc_now);
        r.active_set = sol.active_set;
    } else {
        VectorXd hold(config.num_sources() * config.horizon);
        for (int i = 0; i < config.num_sources(); ++i) {
            hold.segment(i * config.horizon, config.horizon).setConstant(measured_output_mw(config, measured, i));
        }
        detail::fill_plan(r, config, hold, soc_now);
        r.held = true;
    }
    r.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return r;
}

/// Static economic dispatch by bisection on the common marginal cost lambda,
/// p_i = clamp((lambda - b_i) / 2 a_i, p_min, p_max). Ramp and SoC limits are ignored.
inline std::vector<double> incremental_cost_oracle(double demand, const std::vector<SourceSpec>& sources) {
    if (sources.empty()) throw InfeasibleDemand("no sources");
    double lo_sum = 0.0;
    double hi_sum = 0.0;
    double lam_lo = kInfinity;
    double lam_hi = -kInfinity;
    for (const auto& s : sources) {
        lo_sum += s.p_min;
        hi_sum += s.p_max;
        lam_lo = std::min(lam_lo, s.marginal_cost(s.p_min));
        lam_hi = std::max(lam_hi, s.marginal_cost(s.p_max));
    }
    const double slack = 1e-9 * std::max(1.0, std::abs(hi_sum));
    if (demand < lo_sum - slack || demand > hi_sum + slack) {
        throw InfeasibleDemand("demand " + std::to_string(demand) + " MW outside [" + std::to_string(lo_sum) + ", " +
                               std::to_string(hi_sum) + "]");
    }
    auto output = [](const SourceSpec& s, double lambda) {
        if (s.cost_a > 0) return std::clamp((lambda - s.cost_b) / (2.0 * s.cost_a), s.p_min, s.p_max);
        return lambda > s.cost_b ? s.p_max : s.p_min;
    };
    auto total = [&](double lambda) {
        double sum = 0.0;
        for (const auto& s : sources) sum += output(s, lambda);
        return sum;
    };
    double a = lam_lo - 1.0;
    double b = lam_hi + 1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + b);
        (total(mid) < demand ? a : b) = mid;
    }
    const double lambda = 0.5 * (a + b);
    std::vector<double> p;
    p.reserve(sources.size());
    for (const auto& s : sources) p.push_back(output(s, lambda));

    // Zero-slope sources sit exactly at the marginal price: give them the remainder.
    double mismatch = demand;
    for (double v : p) mismatch -= v;
    for (std::size_t i = 0; i < sources.size() && std::abs(mismatch) > 0.0; ++i) {
        if (sources[i].cost_a == 0.0) {
            const double adj = std::clamp(p[i] + mismatch, sources[i].p_min, sources[i].p_max);
            mismatch -= adj - p[i];
            p[i] = adj;
        }
    }
    return p;
}

}  // namespace gridshield
