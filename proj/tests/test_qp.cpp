#include <cmath>
#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "gridshield/qp.hpp"
#include "support/qp_grid.hpp"

using namespace gridshield;
using gridshield::qp_grid::Box;
using gridshield::qp_grid::grid_minimum;
using gridshield::qp_grid::random_problem;

namespace {

bool bit_equal(const VectorXd& a, const VectorXd& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

}  // namespace

TEST(Qp, Unconstrained) {
    auto qp = QuadraticProgram::with_dimensions(2);
    qp.h = 2.0 * MatrixXd::Identity(2, 2);
    qp.f << -2, -4;
    const QpSolution s = solve(qp);
    ASSERT_EQ(s.status, QpStatus::optimal);
    EXPECT_NEAR(s.x[0], 1.0, 1e-12);
    EXPECT_NEAR(s.x[1], 2.0, 1e-12);
    EXPECT_LE(s.kkt.max(), 1e-10);
    const KktResiduals r = kkt_residuals(qp, s.x, s.duals_eq, s.duals_in);
    EXPECT_LE(r.max(), 1e-10);
}

TEST(Qp, EqualityConstrained) {
    auto qp = QuadraticProgram::with_dimensions(2, 1, 0);
    qp.h = MatrixXd::Identity(2, 2);
    qp.a_eq << 1, 1;
    qp.b_eq << 2;
    const QpSolution s = solve(qp);
    ASSERT_EQ(s.status, QpStatus::optimal);
    EXPECT_NEAR(s.x[0], 1.0, 1e-12);
    EXPECT_NEAR(s.x[1], 1.0, 1e-12);
    EXPECT_LE(s.kkt.max(), 1e-8);
    const KktResiduals at_zero = kkt_residuals(qp, VectorXd::Zero(2), VectorXd::Zero(1), VectorXd::Zero(0));
    EXPECT_DOUBLE_EQ(at_zero.primal_feasibility, 2.0);
}

TEST(Qp, BoundOnly) {
    auto qp = QuadraticProgram::with_dimensions(1);
    qp.h(0, 0) = 2.0;  // (x - 3)^2 up to a constant
    qp.f << -6.0;
    qp.upper << 1.0;
    const QpSolution s = solve(qp);
    ASSERT_EQ(s.status, QpStatus::optimal);
    EXPECT_NEAR(s.x[0], 1.0, 1e-12);
    EXPECT_GT(s.duals_bounds[0], 0.0);
    EXPECT_NEAR(s.duals_bounds[0], 4.0, 1e-10);
    EXPECT_LE(s.kkt.max(), 1e-8);
    EXPECT_EQ(s.active_set, std::vector<int>{0});  // upper bound of x_0
}

TEST(Qp, InequalityRows) {
    // min (x-2)^2 + (y-2)^2  s.t.  x + y <= 2
    auto qp = QuadraticProgram::with_dimensions(2, 0, 1);
    qp.h = 2.0 * MatrixXd::Identity(2, 2);
    qp.f << -4, -4;
    qp.a_in << 1, 1;
    qp.b_in << 2;
    const QpSolution s = solve(qp);
    ASSERT_EQ(s.status, QpStatus::optimal);
    EXPECT_NEAR(s.x[0], 1.0, 1e-12);
    EXPECT_NEAR(s.x[1], 1.0, 1e-12);
    EXPECT_NEAR(s.duals_in[0], 2.0, 1e-10);
    EXPECT_LE(s.kkt.max(), 1e-8);
}

TEST(Qp, EmptyProblem) {
    const auto qp = QuadraticProgram::with_dimensions(0);
    const KktResiduals r = kkt_residuals(qp, VectorXd(0), VectorXd(0), VectorXd(0));
    EXPECT_EQ(r.stationarity, 0.0);
    EXPECT_EQ(r.primal_feasibility, 0.0);
    EXPECT_EQ(r.complementarity, 0.0);
    EXPECT_EQ(solve(qp).status, QpStatus::optimal);
}

TEST(Qp, Infeasible) {
    auto qp = QuadraticProgram::with_dimensions(2, 1, 0);
    qp.h = MatrixXd::Identity(2, 2);
    qp.a_eq << 1, 1;
    qp.b_eq << 5;
    qp.upper << 1, 1;
    EXPECT_EQ(solve(qp).status, QpStatus::infeasible);

    auto rows = QuadraticProgram::with_dimensions(1, 0, 2);
    rows.h(0, 0) = 1.0;
    rows.a_in << 1, -1;
    rows.b_in << -1, -1;  // x <= -1 and x >= 1
    EXPECT_EQ(solve(rows).status, QpStatus::infeasible);
}

TEST(Qp, FixedVariablesBecomeEqualities) {
    auto qp = QuadraticProgram::with_dimensions(2, 1, 0);
    qp.h = MatrixXd::Identity(2, 2);
    qp.a_eq << 1, 1;
    qp.b_eq << 3;
    qp.lower << 0.5, -kInfinity;
    qp.upper << 0.5, kInfinity;
    const QpSolution s = solve(qp);
    ASSERT_EQ(s.status, QpStatus::optimal);
    EXPECT_NEAR(s.x[0], 0.5, 1e-12);
    EXPECT_NEAR(s.x[1], 2.5, 1e-12);
    EXPECT_LE(s.kkt.max(), 1e-8);
}

TEST(Qp, LinearProgramViaProximalLoop) {
    auto qp = QuadraticProgram::with_dimensions(2, 0, 1);
    qp.f << 1, 2;
    qp.a_in << -1, -1;
    qp.b_in << -1;
    qp.lower << 0, 0;
    qp.upper << 5, 5;
    const QpSolution s = solve(qp);
    ASSERT_EQ(s.status, QpStatus::optimal);
    EXPECT_NEAR(s.x[0], 1.0, 1e-7);
    EXPECT_NEAR(s.x[1], 0.0, 1e-7);
}

TEST(Qp, ValidateRejectsBadInput) {
    auto qp = QuadraticProgram::with_dimensions(2);
    qp.h(0, 1) = 1.0;
    EXPECT_THROW(solve(qp), ConfigInvalid);
    auto b = QuadraticProgram::with_dimensions(1);
    b.lower << 1;
    b.upper << 0;
    EXPECT_THROW(solve(b), ConfigInvalid);
    EXPECT_THROW(solve(QuadraticProgram::with_dimensions(1), 0.0), ConfigInvalid);
}

TEST(Qp, MatchesGridSearchOnRandomProblems) {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const Box b = random_problem(rng);
        const QpSolution s = solve(b.qp);
        ASSERT_EQ(s.status, QpStatus::optimal) << "trial " << trial;
        EXPECT_LE(s.kkt.max(), 1e-8 * (1.0 + s.x.cwiseAbs().maxCoeff() * 10)) << "trial " << trial;
        const double delta = qp_grid::pitch(b.n);
        double lipschitz = 0.0;
        const double grid = grid_minimum(b.qp, b.has_eq, delta, lipschitz);
        EXPECT_LE(s.objective, grid + 1e-9) << "trial " << trial;
        EXPECT_LE(grid - s.objective, 2.0 * lipschitz * delta) << "trial " << trial;
    }
}

TEST(Qp, ObjectiveHistoryIsMonotone) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const Box b = random_problem(rng);
        const QpSolution s = solve(b.qp);
        ASSERT_FALSE(s.objective_history.empty());
        for (std::size_t k = 1; k < s.objective_history.size(); ++k) {
            const double scale = 1e-9 * (1.0 + std::abs(s.objective_history[k]));
            const double step = s.objective_history[k] - s.objective_history[k - 1];
            if (s.proximal) {
                EXPECT_LE(step, scale) << "trial " << trial;
            } else {
                EXPECT_GE(step, -scale) << "trial " << trial;
            }
        }
    }
}

TEST(Qp, ScalingInvariance) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const Box b = random_problem(rng);
        QuadraticProgram scaled = b.qp;
        scaled.h *= 37.5;
        scaled.f *= 37.5;
        const QpSolution s1 = solve(b.qp);
        const QpSolution s2 = solve(scaled);
        ASSERT_EQ(s2.status, QpStatus::optimal);
        EXPECT_LE((s1.x - s2.x).cwiseAbs().maxCoeff(), 1e-6) << "trial " << trial;
    }
}

TEST(Qp, Deterministic) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const Box b = random_problem(rng);
        const QpSolution s1 = solve(b.qp);
        const QpSolution s2 = solve(b.qp);
        EXPECT_TRUE(bit_equal(s1.x, s2.x));
        EXPECT_TRUE(bit_equal(s1.duals_eq, s2.duals_eq));
        EXPECT_TRUE(bit_equal(s1.duals_bounds, s2.duals_bounds));
        EXPECT_EQ(s1.iterations, s2.iterations);
    }
}

TEST(Qp, WarmStartDoesNotChangeAnswer) {
    auto qp = QuadraticProgram::with_dimensions(3, 1, 0);
    qp.h = MatrixXd::Identity(3, 3);
    qp.f << -5, 1, 2;
    qp.a_eq << 1, 1, 1;
    qp.b_eq << 1;
    qp.lower << 0, 0, 0;
    qp.upper << 0.6, 1, 1;
    const QpSolution cold = solve(qp);
    SolveOptions warm;
    warm.warm_start = cold.active_set;
    const QpSolution hot = solve(qp, warm);
    ASSERT_EQ(hot.status, QpStatus::optimal);
    EXPECT_LE((cold.x - hot.x).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(hot.iterations, cold.iterations);
}

TEST(Qp, BadlyScaledProblem) {
    // MW-scale and SoC-scale rows together.
    auto qp = QuadraticProgram::with_dimensions(2, 1, 1);
    qp.h << 2e6, 0, 0, 2e-2;
    qp.f << 1e3, -1e-3;
    qp.a_eq << 1, 1;
    qp.b_eq << 1.0;
    qp.a_in << 0, 1e-4;
    qp.b_in << 5e-5;
    const QpSolution s = solve(qp);
    ASSERT_EQ(s.status, QpStatus::optimal);
    EXPECT_NEAR(s.x[1], 0.5, 1e-9);
    EXPECT_NEAR(s.x[0], 0.5, 1e-9);
}
