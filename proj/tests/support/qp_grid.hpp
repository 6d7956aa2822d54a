#pragma once

// Random small box-constrained QPs and a brute-force grid minimum, shared by
// the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "gridshield/qp.hpp"

namespace gridshield::qp_grid {

struct Box {
    int n;
    QuadraticProgram qp;
    bool has_eq;
};

inline Box random_problem(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> dim(1, 4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> w(0.2, 0.8);
    const int n = dim(rng);
    const bool has_eq = n >= 2 && (rng() % 4 != 0);
    auto qp = QuadraticProgram::with_dimensions(n, has_eq ? 1 : 0, 0);
    MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = u(rng);
    // Every fifth problem is only positive semidefinite.
    const bool psd = rng() % 5 == 0;
    if (psd) m.row(0).setZero();
    qp.h = m.transpose() * m + (psd ? 0.0 : 0.1) * MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i) {
        qp.f[i] = 2.0 * u(rng);
        qp.lower[i] = -1.0 - std::abs(u(rng));
        qp.upper[i] = 1.0 + std::abs(u(rng));
    }
    if (has_eq) {
        qp.a_eq.setOnes();
        qp.b_eq[0] = qp.lower.sum() + w(rng) * (qp.upper.sum() - qp.lower.sum());
    }
    return {n, qp, has_eq};
}

// Brute-force minimum over a grid of pitch delta. With an equality
// sum(x) = b the last coordinate is eliminated.
inline double grid_minimum(const QuadraticProgram& qp, bool has_eq, double delta, double& lipschitz) {
    const int n = qp.num_variables();
    const int free_dims = has_eq ? n - 1 : n;
    std::vector<int> counts(free_dims);
    for (int i = 0; i < free_dims; ++i) counts[i] = static_cast<int>(std::floor((qp.upper[i] - qp.lower[i]) / delta)) + 1;
    double best = kInfinity;
    std::vector<int> idx(free_dims, 0);
    VectorXd x(n);
    lipschitz = 0.0;
    for (bool done = false; !done;) {
        for (int i = 0; i < free_dims; ++i) x[i] = std::min(qp.lower[i] + idx[i] * delta, qp.upper[i]);
        bool feasible = true;
        if (has_eq) {
            x[n - 1] = qp.b_eq[0] - x.head(n - 1).sum();
            feasible = x[n - 1] >= qp.lower[n - 1] && x[n - 1] <= qp.upper[n - 1];
        }
        if (feasible) {
            best = std::min(best, objective_value(qp, x));
            const VectorXd g = qp.h * x + qp.f;
            double l = 0.0;
            for (int i = 0; i < free_dims; ++i) l += std::abs(has_eq ? g[i] - g[n - 1] : g[i]);
            lipschitz = std::max(lipschitz, l);
        }
        int k = 0;
        while (k < free_dims && ++idx[k] >= counts[k]) idx[k++] = 0;
        done = k == free_dims;
    }
    return best;
}

/// Grid pitch used for an n-variable problem.
inline double pitch(int n) { return n <= 2 ? 0.005 : (n == 3 ? 0.02 : 0.08); }

}  // namespace gridshield::qp_grid
