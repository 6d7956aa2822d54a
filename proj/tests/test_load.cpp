#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gridshield/load.hpp"

using namespace gridshield;

TEST(Load, Derivative) {
    LoadParams p;
    LoadState s;
    EXPECT_EQ(load_derivative(s, p, {5, 5}, {5, 5}, 377), (DqVector{0, 0}));
    s.i_l = {100, 0};
    const DqVector d = load_derivative(s, p, {7, 0}, {7, 0}, 0.0);
    EXPECT_NEAR(d.d, -1000.0, 1e-9);
    EXPECT_EQ(d.q, 0.0);
}

TEST(Load, SlidingModeControl) {
    LoadParams p;
    p.rho = 5.0;
    p.k = 10.0;
    LoadState s;
    EXPECT_EQ(sliding_mode_control(s, p), (DqVector{0, 0}));
    s.i_l = {1, 0};
    EXPECT_EQ(sliding_mode_control(s, p), (DqVector{-15, 0}));
    p.boundary_layer = 0.4;
    s.i_l = {0.2, 0};
    const DqVector v = sliding_mode_control(s, p);
    EXPECT_NEAR(v.d, -2.5 - 5.0 * 0.4, 1e-12);
    EXPECT_EQ(v.q, 0.0);
}

TEST(Load, ReachingTimeClosedForm) {
    LoadParams p;
    p.l_l = 0.03;
    p.k = 10.0;
    p.disturbance_bound = 1.0;
    p.rho = 6.0;
    EXPECT_EQ(reaching_time(p, 0.0), 0.0);
    EXPECT_NEAR(reaching_time(p, 2.0), -0.003 * std::log(0.5 / 2.5), 1e-15);
    EXPECT_NEAR(reaching_time(p, 2.0), 0.004828313737302301, 1e-9);
    EXPECT_GT(reaching_time(p, 4.0), reaching_time(p, 2.0));
    p.rho = 1.0;
    EXPECT_THROW(reaching_time(p, 1.0), GainTooSmall);
}

TEST(Load, SwitchingGainDesign) {
    const SwitchingGain g = design_switching_gain(0.3, 0.03, 1200.0, 13200.0, 414.7);
    EXPECT_NEAR(g.disturbance_bound, (0.3 + 0.03 * 414.7) * 1200.0 + 13200.0, 1e-9);
    EXPECT_NEAR(g.rho, 1.2 * g.disturbance_bound, 1e-9);
}

TEST(Load, ValidateRejectsSmallGain) {
    LoadParams p;
    p.disturbance_bound = 10.0;
    p.rho = 10.0;
    EXPECT_THROW(p.validate(), ValidationError);
}

// Sign law with a disturbance bounded by L: the closed loop enters the band
// within the certified reaching time and stays there; V = l/2 |sigma|^2
// decreases while outside the band.
TEST(Load, ReachingWithinBoundAndStaysInBand) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double omega = 377.0;
    const DqVector v_g{12000.0, 0.0};
    const DqVector i_ref{1000.0, 0.0};
    const double i_max = 1500.0;
    LoadParams p;
    const SwitchingGain sg = design_switching_gain(p.r_l, p.l_l, i_max, norm(v_g), omega);
    p.disturbance_bound = sg.disturbance_bound;
    p.rho = sg.rho;
    p.boundary_layer = 0.0;
    const double h = 1e-6;
    const double band = 2.0 * p.rho * h / p.l_l;
    for (int trial = 0; trial < 10; ++trial) {
        LoadUnit load(p, i_ref);
        load.state.i_l = i_ref + DqVector{400.0 * u(rng), 400.0 * u(rng)};
        const double sigma0 = norm(load.sigma());
        const double t_r = reaching_time(p, sigma0);
        double t = 0.0;
        double reached = -1.0;
        double v_prev = 0.5 * p.l_l * dot(load.sigma(), load.sigma());
        while (t < t_r + 0.02) {
            ASSERT_LE(norm(load.state.i_l), i_max);
            load.advance(h, v_g, omega);
            t += h;
            const double s = norm(load.sigma());
            const double v = 0.5 * p.l_l * s * s;
            if (reached < 0.0) {
                ASSERT_LE(v, v_prev + 1e-9 * v_prev);
                if (s <= band) reached = t;
            } else {
                ASSERT_LE(s, band) << "left the band at t = " << t;
            }
            v_prev = v;
        }
        ASSERT_GE(reached, 0.0);
        EXPECT_LE(reached, t_r + h) << "trial " << trial;
    }
}

TEST(Load, BoundaryLayerKeepsErrorWithinLayer) {
    LoadParams p;
    const SwitchingGain sg = design_switching_gain(p.r_l, p.l_l, 1200.0, 13200.0, 414.7);
    p.disturbance_bound = sg.disturbance_bound;
    p.rho = sg.rho;
    p.boundary_layer = 25.0;
    LoadUnit load(p, {1000.0, 0.0});
    for (int n = 0; n < 50000; ++n) load.advance(2e-5, {12000.0, 0.0}, 377.0);
    EXPECT_LE(std::abs(load.sigma().d), p.boundary_layer);
    EXPECT_LE(std::abs(load.sigma().q), p.boundary_layer);
}

// The closed form against an RK4 solution of l u' = -(rho - L) - k u.
TEST(Load, ReachingTimeMatchesComparisonOde) {
    LoadParams p;
    p.k = 50.0;
    p.disturbance_bound = 15000.0;
    p.rho = 18000.0;
    for (double sigma0 : {1.0, 10.0, 100.0, 1000.0}) {
        const double h = 1e-8;
        auto f = [&](double x) { return (-(p.rho - p.disturbance_bound) - p.k * x) / p.l_l; };
        double x = sigma0;
        double t = 0.0;
        while (true) {
            const double k1 = f(x), k2 = f(x + 0.5 * h * k1), k3 = f(x + 0.5 * h * k2), k4 = f(x + h * k3);
            const double next = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
            if (next <= 0.0) {
                t += h * x / (x - next);
                break;
            }
            x = next;
            t += h;
        }
        EXPECT_NEAR(t, reaching_time(p, sigma0), 0.01 * reaching_time(p, sigma0));
    }
}
