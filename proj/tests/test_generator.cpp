#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "gridshield/generator.hpp"

using namespace gridshield;

namespace {

GeneratorParams exact_params() {
    GeneratorParams p;
    p.gamma_scale = relative_gamma_scale(p);
    p.derivative_source = DerivativeSource::exact;
    return p;
}

}  // namespace

TEST(Generator, ElectricalSpeed) {
    GeneratorParams p;
    GeneratorState s;
    s.omega_m = 94.4;
    EXPECT_NEAR(electrical_speed(s, p), 377.6, 1e-12);
    s.omega_m = 0.0;
    EXPECT_EQ(electrical_speed(s, p), 0.0);
    p.poles = 2;
    s.omega_m = 2.0;
    EXPECT_EQ(electrical_speed(s, p), 2.0);
}

TEST(Generator, SynchronousSpeed) {
    EXPECT_NEAR(synchronous_speed(60.0, 8), 94.24777960769379, 1e-12);
}

TEST(Generator, ElectricalTorque) {
    EXPECT_NEAR(electrical_torque({12000, 0}, {1000, 0}, 377.6), 12e6 / 377.6, 1e-9);
    EXPECT_EQ(electrical_torque({12000, 0}, {0, 0}, 377), 0.0);
    EXPECT_EQ(electrical_torque({0, 400}, {100, 0}, 377), 0.0);
    EXPECT_THROW(electrical_torque({1, 0}, {1, 0}, 0.5), SpeedNearZero);
    EXPECT_THROW(electrical_torque({1, 0}, {1, 0}, -1.0), SpeedNearZero);
}

TEST(Generator, PiSpeedControl) {
    GeneratorParams p;
    GeneratorReferences refs{94.248, {}, {}};
    GeneratorState s;
    s.omega_m = refs.omega_ref;
    EXPECT_DOUBLE_EQ(pi_speed_control(s, refs, p, 1234.0, 1e-3).torque, 1234.0);

    // Speed one rad/s above reference with k_p = 10 removes 10 N m.
    p.k_p = 10.0;
    p.k_i = 0.0;
    s.omega_m = refs.omega_ref + 1.0;
    EXPECT_NEAR(pi_speed_control(s, refs, p, 100.0, 1e-3).torque, 90.0, 1e-12);
}

TEST(Generator, PiAntiWindupFreezesIntegral) {
    GeneratorParams p;
    p.torque_max = 1000.0;
    GeneratorReferences refs{100.0, {}, {}};
    GeneratorState s;
    s.omega_m = 0.0;
    s.pi_integral = 5.0;
    const PiOutput out = pi_speed_control(s, refs, p, 0.0, 1e-3);
    EXPECT_EQ(out.torque, 1000.0);
    EXPECT_EQ(out.integral, 5.0);
    s.omega_m = 200.0;  // would go negative
    const PiOutput low = pi_speed_control(s, refs, p, 0.0, 1e-3);
    EXPECT_EQ(low.torque, 0.0);
}

TEST(Generator, MechanicalDerivative) {
    GeneratorParams p;
    GeneratorState s;
    s.omega_m = 94.4;
    EXPECT_NEAR(mechanical_derivative(s, p, 500.0 + 0.3 * 94.4, 500.0), 0.0, 1e-12);
    s.omega_m = 0.0;
    EXPECT_DOUBLE_EQ(mechanical_derivative(s, p, 100.0, 0.0), 40.0);
}

TEST(Generator, ElectricalDerivatives) {
    GeneratorParams p;
    GeneratorState s;
    EXPECT_EQ(electrical_derivatives(s, p, {}, {}).di_dt, (DqVector{0, 0}));
    EXPECT_EQ(electrical_derivatives(s, p, {}, {}).dv_c_dt, (DqVector{0, 0}));
    s.i = {100, 0};
    const auto d = electrical_derivatives(s, p, {}, {});
    EXPECT_NEAR(d.di_dt.d, -666.6666666666666, 1e-9);
    EXPECT_EQ(d.di_dt.q, 0.0);

    // i = i_r, v = v_c, zero speed: only the resistive term remains.
    s.i = {30, -20};
    s.v_c = {11000, 300};
    const auto e = electrical_derivatives(s, p, s.v_c, s.i);
    EXPECT_NEAR(e.di_dt.d, -(p.r / p.l) * 30, 1e-9);
    EXPECT_NEAR(e.di_dt.q, (p.r / p.l) * 20, 1e-9);
    EXPECT_EQ(e.dv_c_dt, (DqVector{0, 0}));
}

TEST(Generator, FilteredError) {
    EXPECT_EQ(filtered_error({0, 0}, {0, 0}, 3.0), (DqVector{0, 0}));
    EXPECT_EQ(filtered_error({1, 0}, {0, 0}, 2.0), (DqVector{2, 0}));
    EXPECT_EQ(filtered_error({1, 1}, {-2, -2}, 2.0), (DqVector{0, 0}));
}

TEST(Generator, DerivativeFilterFixedPoint) {
    const double k1 = 1000.0;
    const DqVector err{3.0, -2.0};
    const DerivativeFilterStep st = derivative_filter_step(-k1 * err, err, k1, 1e-3);
    EXPECT_NEAR(norm(st.estimate), 0.0, 1e-12);
    EXPECT_NEAR(st.v_f.d, -k1 * err.d, 1e-9);
    EXPECT_NEAR(st.v_f.q, -k1 * err.q, 1e-9);
}

TEST(Generator, DerivativeFilterConstantInputConverges) {
    const double k1 = 1000.0;
    const DqVector err{5.0, 1.0};
    DqVector v_f{};
    DqVector estimate{};
    for (int n = 0; n < 40000; ++n) {
        const auto st = derivative_filter_step(v_f, err, k1, 1e-6);
        v_f = st.v_f;
        estimate = st.estimate;
    }
    EXPECT_LT(norm(estimate), 1e-6);
}

TEST(Generator, DerivativeFilterTracksRamp) {
    const double k1 = 1000.0;
    const double dt = 1e-6;
    DqVector v_f{};
    DqVector estimate{};
    const int n_steps = static_cast<int>(5.0 / k1 / dt);
    for (int n = 0; n <= n_steps; ++n) {
        const auto st = derivative_filter_step(v_f, {n * dt, 0.0}, k1, dt);
        v_f = st.v_f;
        estimate = st.estimate;
    }
    // Step response of a first-order filter after five time constants.
    EXPECT_NEAR(estimate.d, 1.0, std::exp(-5.0) + 1e-2);
    EXPECT_NEAR(estimate.q, 0.0, 1e-12);
}

TEST(Generator, RegressorHandExample) {
    const Regressor y = regressor({1, 0}, {0, 0}, {0, 0}, 1.0, 0.0);
    EXPECT_EQ(y.columns[0], (DqVector{-1, 0}));
    EXPECT_EQ(y.columns[1], (DqVector{0, -2}));
    EXPECT_EQ(y.columns[2], (DqVector{0, 0}));
    const Regressor z = regressor({}, {}, {}, 0.0, 0.0);
    for (const auto& c : z.columns) EXPECT_EQ(c, (DqVector{0, 0}));
}

// Oracle: the filtered-error dynamics, written out directly from the plant
// equations, equal
//   c l eta' = Y(i, i_r, v_c) theta + v - v_c
// for a constant reference. Evaluate eta' by finite differences of an Euler
// step of the plant and compare with the regressor form.
TEST(Generator, RegressorReproducesFilteredErrorDrift) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    GeneratorParams p;
    const ParamVector theta = p.true_parameters();
    for (int n = 0; n < 100; ++n) {
        GeneratorState s;
        s.omega_m = 94.0 + 5.0 * u(rng);
        s.i = {800.0 * u(rng), 800.0 * u(rng)};
        s.v_c = {12000.0 + 500.0 * u(rng), 500.0 * u(rng)};
        const DqVector i_r{600.0 * u(rng), 100.0 * u(rng)};
        const DqVector v_ref{12000.0, 0.0};
        const DqVector v{11000.0 + 2000.0 * u(rng), 1000.0 * u(rng)};
        const double we = electrical_speed(s, p);
        GeneratorReferences refs{94.0, v_ref, i_r};

        // eta = (i - i_r + w c J v_c)/c + alpha (v_c - v_ref); its time
        // derivative with i_r and w held constant, by central differences.
        auto eta_at = [&](double h) {
            GeneratorState x = s;
            const auto d = electrical_derivatives(s, p, v, i_r);
            x.i += h * d.di_dt;
            x.v_c += h * d.dv_c_dt;
            return exact_filtered_error(x, p, refs);
        };
        const double h = 1e-7;
        const DqVector eta_dot = (eta_at(h) - eta_at(-h)) / (2 * h);
        const DqVector lhs = p.c * p.l * eta_dot;
        const Regressor y = regressor(s.i, i_r, s.v_c, we, p.alpha);
        const DqVector rhs = (y * theta) + v - s.v_c;
        const double scale = std::max({norm(lhs), norm(v - s.v_c), 1.0});
        EXPECT_LE(norm(lhs - rhs), 1e-9 * scale) << "sample " << n;
    }
}

TEST(Generator, AdaptiveVoltageControl) {
    const Regressor zero{};
    EXPECT_EQ(adaptive_voltage_control({0, 0}, zero, {1, 2, 3}, {12000, 0}, 5.0), (DqVector{12000, 0}));
    EXPECT_EQ(adaptive_voltage_control({1, 0}, zero, {1, 2, 3}, {12000, 0}, 5.0), (DqVector{11995, 0}));
    const Regressor y = regressor({10, 2}, {3, 4}, {100, 5}, 377, 1000);
    EXPECT_EQ(adaptive_voltage_control({2, 1}, y, {0, 0, 0}, {12000, 0}, 5.0), (DqVector{11990, -5}));
}

TEST(Generator, ParameterUpdate) {
    EXPECT_EQ(parameter_update_derivative(regressor({1, 2}, {3, 4}, {5, 6}, 7, 8), {0, 0}, 0.5),
              (ParamVector{0, 0, 0}));
    Regressor y;
    y.columns = {DqVector{1, 0}, DqVector{0, 1}, DqVector{0, 0}};
    const ParamVector d = parameter_update_derivative(y, {2, 3}, 0.5);
    EXPECT_DOUBLE_EQ(d[0], 1.0);
    EXPECT_DOUBLE_EQ(d[1], 1.5);
    EXPECT_DOUBLE_EQ(d[2], 0.0);
}

TEST(Generator, ParameterUpdateCancellationIdentity) {
    // theta_tilde^T Gamma^-1 theta_hat' = (Y theta_tilde)^T eta
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int n = 0; n < 100; ++n) {
        const Regressor y = regressor({u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}, 10 * u(rng), 3.0);
        const DqVector eta{u(rng), u(rng)};
        const ParamVector tilde{u(rng), u(rng), u(rng)};
        const double gamma = 0.7;
        const ParamVector scale{2.0, 0.5, 3.0};
        const ParamVector d = parameter_update_derivative(y, eta, gamma, scale);
        double lhs = 0.0;
        for (int j = 0; j < 3; ++j) lhs += tilde[j] * d[j] / (gamma * scale[j]);
        EXPECT_NEAR(lhs, dot(y * tilde, eta), 1e-12);
    }
}

TEST(Generator, LyapunovNonIncreasingFromRandomStarts) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> frac(0.5, 1.5);
    const GeneratorParams p = exact_params();
    const double dt = 1e-3;
    const int substeps = 50;
    for (int trial = 0; trial < 10; ++trial) {
        const DqVector v_ref{12000.0, 0.0};
        const DqVector i_r{500.0, 0.0};
        GeneratorUnit g(p, {94.24777960769379, v_ref, i_r});
        g.state.omega_m = 377.0 * 2.0 / p.poles;
        const double we = g.omega_e();
        g.state.v_c = v_ref + DqVector{500.0 * u(rng), 500.0 * u(rng)};
        g.state.i = i_r - we * p.c * J(v_ref) + DqVector{50.0 * u(rng), 50.0 * u(rng)};
        const ParamVector theta = p.true_parameters();
        for (int j = 0; j < 3; ++j) g.state.theta_hat[j] = theta[j] * frac(rng);

        double v_prev = lyapunov_value(g.state, g.params, g.refs);
        for (int n = 0; n < 200; ++n) {
            for (int s = 0; s < substeps; ++s) g.advance(dt / substeps, true);
            const double v = lyapunov_value(g.state, g.params, g.refs);
            ASSERT_LE(v - v_prev, 10.0 * dt * v_prev) << "trial " << trial << " sample " << n;
            v_prev = v;
        }
    }
}
