#pragma once

// Dense convex quadratic programming.
//
//   minimize    1/2 x^T H x + f^T x
//   subject to  A_eq x  = b_eq
//               A_in x <= b_in
//               lower <= x <= upper
//
// Solved with the Goldfarb-Idnani dual active-set method on a Ruiz-equilibrated
// copy of the problem. A positive semidefinite H is handled with an outer
// proximal-point loop. Everything is sequential and allocation order is fixed,
// so identical inputs give bit-identical outputs.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "gridshield/errors.hpp"

namespace gridshield {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct QuadraticProgram {
    MatrixXd h;
    VectorXd f;
    MatrixXd a_eq;
    VectorXd b_eq;
    MatrixXd a_in;
    VectorXd b_in;
    VectorXd lower;
    VectorXd upper;

    /// Zero cost, no constraints, infinite bounds.
    static QuadraticProgram with_dimensions(int n, int m_eq = 0, int m_in = 0) {
        QuadraticProgram qp;
        qp.h = MatrixXd::Zero(n, n);
        qp.f = VectorXd::Zero(n);
        qp.a_eq = MatrixXd::Zero(m_eq, n);
        qp.b_eq = VectorXd::Zero(m_eq);
        qp.a_in = MatrixXd::Zero(m_in, n);
        qp.b_in = VectorXd::Zero(m_in);
        qp.lower = VectorXd::Constant(n, -kInfinity);
        qp.upper = VectorXd::Constant(n, kInfinity);
        return qp;
    }

    int num_variables() const { return static_cast<int>(f.size()); }
    int num_equalities() const { return static_cast<int>(b_eq.size()); }
    int num_inequalities() const { return static_cast<int>(b_in.size()); }

    void validate() const {
        const auto n = f.size();
        auto require = [](bool ok, std::string_view what) {
            if (!ok) throw ConfigInvalid("quadratic program: " + std::string(what));
        };
        require(h.rows() == n && h.cols() == n, "H must be n x n");
        require(a_eq.cols() == n && a_eq.rows() == b_eq.size(), "A_eq/b_eq dimensions");
        require(a_in.cols() == n && a_in.rows() == b_in.size(), "A_in/b_in dimensions");
        require(lower.size() == n && upper.size() == n, "bound dimensions");
        if (n > 0) {
            const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
            require((h - h.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale, "H must be symmetric");
        }
        require((lower.array() <= upper.array()).all(), "lower must not exceed upper");
        require(h.allFinite() && f.allFinite() && a_eq.allFinite() && b_eq.allFinite() &&
                    a_in.allFinite() && b_in.allFinite(),
                "data must be finite");
    }
};

enum class QpStatus { optimal, max_iterations, infeasible };

inline std::string_view to_string(QpStatus s) {
    switch (s) {
        case QpStatus::optimal: return "optimal";
        case QpStatus::max_iterations: return "max_iterations";
        case QpStatus::infeasible: return "infeasible";
    }
    return "unknown";
}

struct KktResiduals {
    double stationarity{0.0};
    double primal_feasibility{0.0};
    double complementarity{0.0};

    double max() const { return std::max({stationarity, primal_feasibility, complementarity}); }
};

struct QpSolution {
    VectorXd x;
    VectorXd duals_eq;
    VectorXd duals_in;       // >= 0
    VectorXd duals_bounds;   // > 0: upper bound active, < 0: lower bound active
    QpStatus status{QpStatus::max_iterations};
    KktResiduals kkt;
    double objective{0.0};
    int iterations{0};
    /// Merit sequence. Positive definite H: objective after every primal
    /// step of the dual method (non-decreasing). Otherwise: objective at each
    /// proximal outer iterate (non-increasing).
    std::vector<double> objective_history;
    bool proximal{false};
    /// Active inequalities in the combined index space: rows of A_in are
    /// [0, m_in), upper bounds m_in + j, lower bounds m_in + n + j.
    std::vector<int> active_set;
};

struct SolveOptions {
    double tolerance{1e-8};
    int max_iterations{20000};
    int equilibration_passes{15};
    /// Inequalities (combined index space) to try first when several are violated.
    std::vector<int> warm_start;
};

inline double objective_value(const QuadraticProgram& qp, const VectorXd& x) {
    return 0.5 * x.dot(qp.h * x) + qp.f.dot(x);
}

/// KKT residuals with explicit bound multipliers:
///   stationarity  |H x + f + A_eq^T l + A_in^T m + z|_inf
///   primal        largest equality, inequality or bound violation
///   complementarity  largest |m_j * slack_j|, |z_j * slack_j| or dual-sign violation
inline KktResiduals kkt_residuals(const QuadraticProgram& qp, const VectorXd& x, const VectorXd& duals_eq,
                                  const VectorXd& duals_in, const VectorXd& duals_bounds) {
    KktResiduals res;
    const auto n = x.size();
    if (n == 0 && qp.num_equalities() == 0 && qp.num_inequalities() == 0) return res;

    VectorXd grad = qp.h * x + qp.f + qp.a_eq.transpose() * duals_eq + qp.a_in.transpose() * duals_in + duals_bounds;
    res.stationarity = n > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;

    double primal = 0.0;
    if (qp.num_equalities() > 0) primal = (qp.a_eq * x - qp.b_eq).cwiseAbs().maxCoeff();
    VectorXd slack_in = qp.a_in * x - qp.b_in;
    for (Eigen::Index i = 0; i < slack_in.size(); ++i) primal = std::max(primal, slack_in[i]);
    for (Eigen::Index j = 0; j < n; ++j) {
        primal = std::max({primal, x[j] - qp.upper[j], qp.lower[j] - x[j]});
    }
    res.primal_feasibility = primal;

    double comp = 0.0;
    for (Eigen::Index i = 0; i < slack_in.size(); ++i) {
        comp = std::max({comp, std::abs(duals_in[i] * slack_in[i]), -duals_in[i]});
    }
    for (Eigen::Index j = 0; j < n; ++j) {
        const double z = duals_bounds[j];
        if (z > 0) {
            comp = std::max(comp, std::isfinite(qp.upper[j]) ? std::abs(z * (x[j] - qp.upper[j])) : z);
        } else if (z < 0) {
            comp = std::max(comp, std::isfinite(qp.lower[j]) ? std::abs(z * (x[j] - qp.lower[j])) : -z);
        }
    }
    res.complementarity = comp;
    return res;
}

/// As above, with bound multipliers inferred from the stationarity gap at
/// bounds that are active at x.
inline KktResiduals kkt_residuals(const QuadraticProgram& qp, const VectorXd& x, const VectorXd& duals_eq,
                                  const VectorXd& duals_in) {
    const auto n = x.size();
    VectorXd grad = qp.h * x + qp.f + qp.a_eq.transpose() * duals_eq + qp.a_in.transpose() * duals_in;
    VectorXd z = VectorXd::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double tol_u = 1e-9 * (1.0 + std::abs(qp.upper[j]));
        const double tol_l = 1e-9 * (1.0 + std::abs(qp.lower[j]));
        if (std::isfinite(qp.upper[j]) && x[j] >= qp.upper[j] - tol_u && grad[j] < 0) z[j] = -grad[j];
        if (std::isfinite(qp.lower[j]) && x[j] <= qp.lower[j] + tol_l && grad[j] > 0) z[j] = -grad[j];
    }
    return kkt_residuals(qp, x, duals_eq, duals_in, z);
}

namespace detail {

/// Magnitude of the problem data and solution, used to make the optimality
/// test relative for badly scaled problems.
inline double residual_scale(const QuadraticProgram& qp, const VectorXd& x) {
    double s = 1.0;
    auto upd = [&s](double v) { if (std::isfinite(v)) s = std::max(s, std::abs(v)); };
    if (x.size() > 0) {
        upd((qp.h * x).cwiseAbs().maxCoeff());
        upd(qp.f.cwiseAbs().maxCoeff());
    }
    if (qp.b_eq.size() > 0) upd(qp.b_eq.cwiseAbs().maxCoeff());
    if (qp.b_in.size() > 0) upd(qp.b_in.cwiseAbs().maxCoeff());
    return s;
}

inline double hypot_safe(double a, double b) { return std::hypot(a, b); }

/// Goldfarb-Idnani on  min 1/2 x^T G x + g^T x  s.t.  CE^T x + ce0 = 0,  CI^T x + ci0 >= 0,
/// with G positive definite.
class DualActiveSet {
public:
    enum class Outcome { optimal, max_iterations, infeasible };

    struct Result {
        Outcome outcome{Outcome::max_iterations};
        VectorXd x;
        VectorXd u_eq;  // multipliers in the G-I sign convention
        VectorXd u_in;
        std::vector<int> active_in;
        int iterations{0};
        std::vector<VectorXd> step_points;
    };

    DualActiveSet(const MatrixXd& g_mat, const VectorXd& g_vec, const MatrixXd& ce, const VectorXd& ce0,
                  const MatrixXd& ci, const VectorXd& ci0)
        : G_(g_mat), g_(g_vec), CE_(ce), ce0_(ce0), CI_(ci), ci0_(ci0) {}

    /// Returns false when G is not numerically positive definite.
    bool factorize() {
        const auto n = G_.rows();
        Eigen::LLT<MatrixXd> llt(G_);
        if (llt.info() != Eigen::Success) return false;
        const MatrixXd l = llt.matrixL();
        const double dmin = l.diagonal().minCoeff();
        const double dmax = l.diagonal().maxCoeff();
        if (!(dmin > 1e-7 * dmax)) return false;
        J_ = l.transpose().triangularView<Eigen::Upper>().solve(MatrixXd::Identity(n, n));
        x0_ = -llt.solve(g_);
        return true;
    }

    Result run(int max_iterations, const std::vector<int>& preferred) {
        const int n = static_cast<int>(G_.rows());
        const int me = static_cast<int>(CE_.cols());
        const int mi = static_cast<int>(CI_.cols());
        Result res;
        res.x = x0_;
        res.u_eq = VectorXd::Zero(me);
        res.u_in = VectorXd::Zero(mi);
        VectorXd& x = res.x;

        R_ = MatrixXd::Zero(n, n);
        d_ = VectorXd::Zero(n);
        z_ = VectorXd::Zero(n);
        r_ = VectorXd::Zero(n + 1);
        u_ = VectorXd::Zero(n + 1);
        active_.assign(n + 1, 0);
        iq_ = 0;
        r_norm_ = 1.0;
        const double eps = std::numeric_limits<double>::epsilon();

        // Equalities: full steps, never dropped.
        std::vector<int> eq_slot(me, -1);
        for (int i = 0; i < me; ++i) {
            const VectorXd np = CE_.col(i);
            compute_d(np);
            update_z(n);
            update_r();
            const double resid = np.dot(x) + ce0_[i];
            const double znp = z_.dot(np);
            if (z_.squaredNorm() <= eps * eps * std::max(1.0, np.squaredNorm())) {
                // Dependent on the active equalities: redundant if satisfied.
                if (std::abs(resid) > 1e-9 * (1.0 + std::abs(ce0_[i]))) {
                    res.outcome = Outcome::infeasible;
                    return res;
                }
                continue;
            }
            const double t2 = -resid / znp;
            x += t2 * z_;
            u_[iq_] = t2;
            u_.head(iq_) -= t2 * r_.head(iq_);
            active_[iq_] = -i - 1;
            if (!add_constraint(n)) {
                res.outcome = Outcome::infeasible;
                return res;
            }
            eq_slot[i] = iq_ - 1;
        }
        const int n_eq_active = iq_;
        res.step_points.push_back(x);

        std::vector<char> excluded(mi, 0);
        std::vector<char> is_preferred(mi, 0);
        for (int p : preferred) if (p >= 0 && p < mi) is_preferred[p] = 1;

        VectorXd s(mi);
        int iter = 0;
        for (;;) {  // outer loop: pick a violated constraint
            if (++iter > max_iterations) {
                res.outcome = Outcome::max_iterations;
                break;
            }
            std::vector<char> in_active(mi, 0);
            for (int k = n_eq_active; k < iq_; ++k) in_active[active_[k]] = 1;
            for (int i = 0; i < mi; ++i) s[i] = CI_.col(i).dot(x) + ci0_[i];

            const VectorXd x_old = x;
            const VectorXd u_old = u_.head(iq_);
            const std::vector<int> active_old(active_.begin(), active_.begin() + iq_);
            const int iq_old = iq_;

            int p = pick_violated(s, in_active, excluded, is_preferred);
            if (p < 0) {
                bool any_excluded_violated = false;
                for (int i = 0; i < mi; ++i) {
                    if (excluded[i] && !in_active[i] && s[i] < -feasibility_tol(i)) any_excluded_violated = true;
                }
                res.outcome = any_excluded_violated ? Outcome::infeasible : Outcome::optimal;
                break;
            }

            u_[iq_] = 0.0;
            active_[iq_] = p;
            bool restart = false;
            bool stop = false;
            for (;;) {  // inner loop: steps toward satisfying constraint p
                if (++iter > max_iterations) {
                    res.outcome = Outcome::max_iterations;
                    stop = true;
                    break;
                }
                const VectorXd np = CI_.col(p);
                compute_d(np);
                update_z(n);
                update_r();

                // Partial (dual) step length: first active inequality whose
                // multiplier would become negative.
                double t1 = kInfinity;
                int drop = -1;
                for (int k = n_eq_active; k < iq_; ++k) {
                    if (r_[k] > 0.0) {
                        const double ratio = u_[k] / r_[k];
                        if (ratio < t1) {
                            t1 = ratio;
                            drop = active_[k];
                        }
                    }
                }
                // Full (primal) step length.
                const double znp = z_.dot(np);
                const double t2 = (z_.squaredNorm() > eps * eps * std::max(1.0, np.squaredNorm()) && znp > 0.0)
                                      ? -s[p] / znp
                                      : kInfinity;
                const double t = std::min(t1, t2);
                if (!std::isfinite(t)) {
                    res.outcome = Outcome::infeasible;
                    stop = true;
                    break;
                }
                if (!std::isfinite(t2)) {
                    // Dual step only.
                    u_.head(iq_) -= t * r_.head(iq_);
                    u_[iq_] += t;
                    delete_constraint(n, n_eq_active, drop);
                    continue;
                }
                x += t * z_;
                u_.head(iq_) -= t * r_.head(iq_);
                u_[iq_] += t;
                if (t == t2) {
                    if (!add_constraint(n)) {
                        // Degenerate: undo and try a different constraint.
                        excluded[p] = 1;
                        x = x_old;
                        iq_ = iq_old;
                        for (int k = 0; k < iq_; ++k) {
                            active_[k] = active_old[k];
                            u_[k] = u_old[k];
                        }
                        rebuild_factorization(n, n_eq_active);
                        restart = true;
                    }
                    break;
                }
                delete_constraint(n, n_eq_active, drop);
                s[p] = CI_.col(p).dot(x) + ci0_[p];
            }
            if (stop) break;
            if (!restart) {
                std::fill(excluded.begin(), excluded.end(), 0);
                res.step_points.push_back(x);
            }
        }

        res.iterations = iter;
        for (int i = 0; i < me; ++i) res.u_eq[i] = eq_slot[i] >= 0 ? 0.0 : 0.0;
        for (int k = 0; k < iq_; ++k) {
            if (active_[k] < 0) {
                res.u_eq[-active_[k] - 1] = u_[k];
            } else {
                res.u_in[active_[k]] = u_[k];
                res.active_in.push_back(active_[k]);
            }
        }
        std::sort(res.active_in.begin(), res.active_in.end());
        return res;
    }

private:
    double feasibility_tol(int i) const { return 1e-11 * (1.0 + std::abs(ci0_[i])); }

    int pick_violated(const VectorXd& s, const std::vector<char>& in_active, const std::vector<char>& excluded,
                      const std::vector<char>& preferred) const {
        int best = -1;
        int best_pref = -1;
        double worst = 0.0;
        double worst_pref = 0.0;
        for (int i = 0; i < static_cast<int>(s.size()); ++i) {
            if (in_active[i] || excluded[i]) continue;
            if (!(s[i] < -feasibility_tol(i))) continue;
            if (s[i] < worst) {
                worst = s[i];
                best = i;
            }
            if (preferred[i] && s[i] < worst_pref) {
                worst_pref = s[i];
                best_pref = i;
            }
        }
        return best_pref >= 0 ? best_pref : best;
    }

    void compute_d(const VectorXd& np) { d_ = J_.transpose() * np; }

    void update_z(int n) { z_ = J_.rightCols(n - iq_) * d_.tail(n - iq_); }

    void update_r() {
        if (iq_ == 0) return;
        r_.head(iq_) = R_.topLeftCorner(iq_, iq_).triangularView<Eigen::Upper>().solve(d_.head(iq_));
    }

    bool add_constraint(int n) {
        for (int j = n - 1; j >= iq_ + 1; --j) {
            double cc = d_[j - 1];
            double ss = d_[j];
            const double h = hypot_safe(cc, ss);
            if (h == 0.0) continue;
            d_[j] = 0.0;
            ss /= h;
            cc /= h;
            if (cc < 0.0) {
                cc = -cc;
                ss = -ss;
                d_[j - 1] = -h;
            } else {
                d_[j - 1] = h;
            }
            const double xny = ss / (1.0 + cc);
            for (int k = 0; k < n; ++k) {
                const double t1 = J_(k, j - 1);
                const double t2 = J_(k, j);
                J_(k, j - 1) = t1 * cc + t2 * ss;
                J_(k, j) = xny * (t1 + J_(k, j - 1)) - t2;
            }
        }
        ++iq_;
        R_.col(iq_ - 1).head(iq_) = d_.head(iq_);
        if (std::abs(d_[iq_ - 1]) <= std::numeric_limits<double>::epsilon() * r_norm_) {
            return false;
        }
        r_norm_ = std::max(r_norm_, std::abs(d_[iq_ - 1]));
        return true;
    }

    void delete_constraint(int n, int first_droppable, int constraint) {
        int qq = -1;
        for (int i = first_droppable; i < iq_; ++i) {
            if (active_[i] == constraint) {
                qq = i;
                break;
            }
        }
        if (qq < 0) return;
        for (int i = qq; i < iq_ - 1; ++i) {
            active_[i] = active_[i + 1];
            u_[i] = u_[i + 1];
            R_.col(i) = R_.col(i + 1);
        }
        active_[iq_ - 1] = active_[iq_];
        u_[iq_ - 1] = u_[iq_];
        active_[iq_] = 0;
        u_[iq_] = 0.0;
        for (int j = 0; j < iq_; ++j) R_(j, iq_ - 1) = 0.0;
        --iq_;
        if (iq_ == 0) return;
        for (int j = qq; j < iq_; ++j) {
            double cc = R_(j, j);
            double ss = R_(j + 1, j);
            const double h = hypot_safe(cc, ss);
            if (h == 0.0) continue;
            cc /= h;
            ss /= h;
            R_(j + 1, j) = 0.0;
            if (cc < 0.0) {
                R_(j, j) = -h;
                cc = -cc;
                ss = -ss;
            } else {
                R_(j, j) = h;
            }
            const double xny = ss / (1.0 + cc);
            for (int k = j + 1; k < iq_; ++k) {
                const double t1 = R_(j, k);
                const double t2 = R_(j + 1, k);
                R_(j, k) = t1 * cc + t2 * ss;
                R_(j + 1, k) = xny * (t1 + R_(j, k)) - t2;
            }
            for (int k = 0; k < n; ++k) {
                const double t1 = J_(k, j);
                const double t2 = J_(k, j + 1);
                J_(k, j) = t1 * cc + t2 * ss;
                J_(k, j + 1) = xny * (J_(k, j) + t1) - t2;
            }
        }
    }

    /// Recomputes J and R for the present active set (after an undo).
    void rebuild_factorization(int n, int /*n_eq_active*/) {
        Eigen::LLT<MatrixXd> llt(G_);
        const MatrixXd l = llt.matrixL();
        J_ = l.transpose().triangularView<Eigen::Upper>().solve(MatrixXd::Identity(n, n));
        R_.setZero();
        const int count = iq_;
        const std::vector<int> act(active_.begin(), active_.begin() + count);
        iq_ = 0;
        r_norm_ = 1.0;
        for (int k = 0; k < count; ++k) {
            const VectorXd np = act[k] < 0 ? VectorXd(CE_.col(-act[k] - 1)) : VectorXd(CI_.col(act[k]));
            compute_d(np);
            active_[iq_] = act[k];
            add_constraint(n);
        }
    }

    MatrixXd G_;
    VectorXd g_;
    MatrixXd CE_;
    VectorXd ce0_;
    MatrixXd CI_;
    VectorXd ci0_;

    MatrixXd J_;
    MatrixXd R_;
    VectorXd x0_;
    VectorXd d_, z_, r_, u_;
    std::vector<int> active_;
    int iq_{0};
    double r_norm_{1.0};
};

struct Equilibration {
    VectorXd var;     // x = var .* x_scaled
    VectorXd row_eq;  // scaled rows = row .* A rows
    VectorXd row_in;
};

inline Equilibration ruiz_equilibrate(const QuadraticProgram& qp, int passes) {
    const auto n = qp.num_variables();
    Equilibration e{VectorXd::Ones(n), VectorXd::Ones(qp.num_equalities()), VectorXd::Ones(qp.num_inequalities())};
    MatrixXd h = qp.h;
    MatrixXd ae = qp.a_eq;
    MatrixXd ai = qp.a_in;
    auto inv_sqrt = [](double v) { return v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0; };
    for (int pass = 0; pass < passes; ++pass) {
        VectorXd dv(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            double m = h.col(j).cwiseAbs().maxCoeff();
            if (ae.rows() > 0) m = std::max(m, ae.col(j).cwiseAbs().maxCoeff());
            if (ai.rows() > 0) m = std::max(m, ai.col(j).cwiseAbs().maxCoeff());
            dv[j] = inv_sqrt(m);
        }
        VectorXd de(ae.rows());
        for (Eigen::Index i = 0; i < ae.rows(); ++i) de[i] = inv_sqrt(ae.row(i).cwiseAbs().maxCoeff());
        VectorXd di(ai.rows());
        for (Eigen::Index i = 0; i < ai.rows(); ++i) di[i] = inv_sqrt(ai.row(i).cwiseAbs().maxCoeff());
        h = dv.asDiagonal() * h * dv.asDiagonal();
        ae = de.asDiagonal() * ae * dv.asDiagonal();
        ai = di.asDiagonal() * ai * dv.asDiagonal();
        e.var = e.var.cwiseProduct(dv);
        e.row_eq = e.row_eq.cwiseProduct(de);
        e.row_in = e.row_in.cwiseProduct(di);
    }
    return e;
}

}  // namespace detail

inline QpSolution solve(const QuadraticProgram& qp, const SolveOptions& options) {
    qp.validate();
    if (!(options.tolerance > 0)) throw ConfigInvalid("solve: tolerance must be positive");
    const int n = qp.num_variables();
    const int me = qp.num_equalities();
    const int mi = qp.num_inequalities();

    QpSolution sol;
    sol.x = VectorXd::Zero(n);
    sol.duals_eq = VectorXd::Zero(me);
    sol.duals_in = VectorXd::Zero(mi);
    sol.duals_bounds = VectorXd::Zero(n);
    if (n == 0) {
        sol.kkt = kkt_residuals(qp, sol.x, sol.duals_eq, sol.duals_in, sol.duals_bounds);
        sol.status = sol.kkt.max() <= options.tolerance ? QpStatus::optimal : QpStatus::infeasible;
        return sol;
    }

    const detail::Equilibration eq = detail::ruiz_equilibrate(qp, options.equilibration_passes);
    const VectorXd& dv = eq.var;
    const MatrixXd hs = dv.asDiagonal() * qp.h * dv.asDiagonal();
    const VectorXd fs = dv.cwiseProduct(qp.f);

    // Constraint columns in the G-I convention. Fixed variables become
    // equalities; other finite bounds become inequality rows.
    std::vector<int> fixed;
    std::vector<int> upper_rows;
    std::vector<int> lower_rows;
    for (int j = 0; j < n; ++j) {
        if (qp.lower[j] == qp.upper[j]) {
            fixed.push_back(j);
            continue;
        }
        if (std::isfinite(qp.upper[j])) upper_rows.push_back(j);
        if (std::isfinite(qp.lower[j])) lower_rows.push_back(j);
    }
    const int n_ce = me + static_cast<int>(fixed.size());
    const int n_ci = mi + static_cast<int>(upper_rows.size() + lower_rows.size());
    MatrixXd ce(n, n_ce);
    VectorXd ce0(n_ce);
    for (int i = 0; i < me; ++i) {
        ce.col(i) = eq.row_eq[i] * qp.a_eq.row(i).transpose().cwiseProduct(dv);
        ce0[i] = -eq.row_eq[i] * qp.b_eq[i];
    }
    for (std::size_t k = 0; k < fixed.size(); ++k) {
        const int j = fixed[k];
        ce.col(me + k) = VectorXd::Unit(n, j);
        ce0[me + k] = -qp.lower[j] / dv[j];
    }
    MatrixXd ci(n, n_ci);
    VectorXd ci0(n_ci);
    std::vector<int> ci_to_index(n_ci);  // combined index space
    std::vector<int> index_to_ci(mi + 2 * n, -1);
    for (int i = 0; i < mi; ++i) {
        ci.col(i) = -eq.row_in[i] * qp.a_in.row(i).transpose().cwiseProduct(dv);
        ci0[i] = eq.row_in[i] * qp.b_in[i];
        ci_to_index[i] = i;
    }
    int col = mi;
    for (int j : upper_rows) {
        ci.col(col) = -VectorXd::Unit(n, j);
        ci0[col] = qp.upper[j] / dv[j];
        ci_to_index[col] = mi + j;
        ++col;
    }
    for (int j : lower_rows) {
        ci.col(col) = VectorXd::Unit(n, j);
        ci0[col] = -qp.lower[j] / dv[j];
        ci_to_index[col] = mi + n + j;
        ++col;
    }
    for (int c = 0; c < n_ci; ++c) index_to_ci[ci_to_index[c]] = c;
    std::vector<int> preferred;
    for (int idx : options.warm_start) {
        if (idx >= 0 && idx < mi + 2 * n && index_to_ci[idx] >= 0) preferred.push_back(index_to_ci[idx]);
    }

    // PSD Hessians: proximal point iterations on a strictly convex copy.
    double prox = 0.0;
    {
        Eigen::LLT<MatrixXd> llt(hs);
        const bool pd = llt.info() == Eigen::Success &&
                        llt.matrixL().toDenseMatrix().diagonal().minCoeff() >
                            1e-7 * llt.matrixL().toDenseMatrix().diagonal().maxCoeff();
        if (!pd) prox = 1e-3 * std::max(1.0, hs.cwiseAbs().maxCoeff());
    }
    const MatrixXd g_mat = hs + prox * MatrixXd::Identity(n, n);
    VectorXd center = VectorXd::Zero(n);
    detail::DualActiveSet::Result result;
    int total_iterations = 0;
    sol.proximal = prox > 0.0;
    const int outer_limit = prox > 0.0 ? options.max_iterations : 1;
    bool converged_outer = prox == 0.0;
    for (int outer = 0; outer < outer_limit; ++outer) {
        detail::DualActiveSet das(g_mat, fs - prox * center, ce, ce0, ci, ci0);
        if (!das.factorize()) {
            result.outcome = detail::DualActiveSet::Outcome::infeasible;
            break;
        }
        result = das.run(std::max(1, options.max_iterations - total_iterations), preferred);
        total_iterations += result.iterations;
        if (prox == 0.0) {
            for (const VectorXd& p : result.step_points) {
                sol.objective_history.push_back(objective_value(qp, dv.cwiseProduct(p)));
            }
        }
        if (result.outcome != detail::DualActiveSet::Outcome::optimal || prox == 0.0) break;
        sol.objective_history.push_back(objective_value(qp, dv.cwiseProduct(result.x)));
        const double move = (result.x - center).cwiseAbs().maxCoeff();
        center = result.x;
        if (move <= 1e-3 * options.tolerance * (1.0 + result.x.cwiseAbs().maxCoeff())) {
            converged_outer = true;
            break;
        }
        if (total_iterations >= options.max_iterations) break;
    }

    sol.iterations = total_iterations;
    if (result.x.size() == n) sol.x = dv.cwiseProduct(result.x);
    if (result.u_eq.size() == n_ce) {
        for (int i = 0; i < me; ++i) sol.duals_eq[i] = -eq.row_eq[i] * result.u_eq[i];
        for (std::size_t k = 0; k < fixed.size(); ++k) {
            const int j = fixed[k];
            sol.duals_bounds[j] = -result.u_eq[me + k] / dv[j];
        }
    }
    if (result.u_in.size() == n_ci) {
        for (int i = 0; i < mi; ++i) sol.duals_in[i] = eq.row_in[i] * result.u_in[i];
        for (int c = mi; c < n_ci; ++c) {
            const int idx = ci_to_index[c];
            if (idx < mi + n) {
                const int j = idx - mi;
                sol.duals_bounds[j] += result.u_in[c] / dv[j];
            } else {
                const int j = idx - mi - n;
                sol.duals_bounds[j] -= result.u_in[c] / dv[j];
            }
        }
        for (int c : result.active_in) sol.active_set.push_back(ci_to_index[c]);
        std::sort(sol.active_set.begin(), sol.active_set.end());
    }
    sol.objective = objective_value(qp, sol.x);
    sol.kkt = kkt_residuals(qp, sol.x, sol.duals_eq, sol.duals_in, sol.duals_bounds);

    switch (result.outcome) {
        case detail::DualActiveSet::Outcome::infeasible:
            sol.status = QpStatus::infeasible;
            break;
        case detail::DualActiveSet::Outcome::max_iterations:
            sol.status = QpStatus::max_iterations;
            break;
        case detail::DualActiveSet::Outcome::optimal: {
            const double limit = options.tolerance * detail::residual_scale(qp, sol.x);
            sol.status = (converged_outer && sol.kkt.max() <= limit) ? QpStatus::optimal : QpStatus::max_iterations;
            break;
        }
    }
    return sol;
}

inline QpSolution solve(const QuadraticProgram& qp, double tolerance = 1e-8, int max_iterations = 20000) {
    SolveOptions options;
    options.tolerance = tolerance;
    options.max_iterations = max_iterations;
    return solve(qp, options);
}

}  // namespace gridshield
