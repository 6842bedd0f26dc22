#pragma once

// Reference solvers used only by the tests. They share no code with the library.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace oracle {

/// min c^T x  s.t.  A x = b, x >= 0 by a dense two-phase tableau simplex with
/// Bland's rule. Returns the optimal objective. Small problems only.
inline double solve_lp_equality(Eigen::MatrixXd A, Eigen::VectorXd b, const Eigen::VectorXd& c) {
    const int m = static_cast<int>(A.rows());
    const int n = static_cast<int>(A.cols());
    constexpr double eps = 1e-12;
    for (int i = 0; i < m; ++i)
        if (b(i) < 0) {
            A.row(i) *= -1.0;
            b(i) *= -1.0;
        }
    // Columns: n structural, m artificial, then rhs.
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, n + m + 1);
    t.leftCols(n) = A;
    t.block(0, n, m, m).setIdentity();
    t.col(n + m) = b;
    std::vector<int> basis(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) basis[static_cast<std::size_t>(i)] = n + i;
    std::vector<bool> row_alive(static_cast<std::size_t>(m), true);

    auto pivot = [&](int r, int col) {
        t.row(r) /= t(r, col);
        for (int i = 0; i < m; ++i)
            if (i != r && std::abs(t(i, col)) > 0.0) t.row(i) -= t(i, col) * t.row(r);
        basis[static_cast<std::size_t>(r)] = col;
    };

    auto run = [&](const Eigen::VectorXd& cost, int allowed_cols) {
        for (int iter = 0; iter < 100000; ++iter) {
            int enter = -1;
            for (int j = 0; j < allowed_cols && enter < 0; ++j) {
                double reduced = cost(j);
                for (int i = 0; i < m; ++i)
                    if (row_alive[static_cast<std::size_t>(i)]) reduced -= cost(basis[static_cast<std::size_t>(i)]) * t(i, j);
                if (reduced < -1e-11) enter = j;
            }
            if (enter < 0) return;
            int leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < m; ++i) {
                if (!row_alive[static_cast<std::size_t>(i)] || t(i, enter) <= eps) continue;
                const double ratio = t(i, n + m) / t(i, enter);
                if (ratio < best - 1e-14 ||
                    (std::abs(ratio - best) <= 1e-14 && basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
                    best = ratio;
                    leave = i;
                }
            }
            if (leave < 0) throw std::runtime_error("oracle LP unbounded");
            pivot(leave, enter);
        }
        throw std::runtime_error("oracle LP iteration limit");
    };

    Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(n + m);
    phase1.tail(m).setOnes();
    run(phase1, n + m);
    double infeasibility = 0.0;
    for (int i = 0; i < m; ++i)
        if (basis[static_cast<std::size_t>(i)] >= n) infeasibility += t(i, n + m);
    if (infeasibility > 1e-9) throw std::runtime_error("oracle LP infeasible");
    // Drive zero-level artificials out of the basis, or drop their redundant rows.
    for (int i = 0; i < m; ++i) {
        if (basis[static_cast<std::size_t>(i)] < n) continue;
        int col = -1;
        for (int j = 0; j < n && col < 0; ++j)
            if (std::abs(t(i, j)) > 1e-9) col = j;
        if (col >= 0)
            pivot(i, col);
        else
            row_alive[static_cast<std::size_t>(i)] = false;
    }
    Eigen::VectorXd phase2 = Eigen::VectorXd::Zero(n + m);
    phase2.head(n) = c;
    run(phase2, n);
    double value = 0.0;
    for (int i = 0; i < m; ++i)
        if (row_alive[static_cast<std::size_t>(i)]) value += phase2(basis[static_cast<std::size_t>(i)]) * t(i, n + m);
    return value;
}

/// Coupling LP: min sum_ij C_ij x_ij with row sums p and column sums q.
inline double coupling_lp(const std::vector<double>& p, const std::vector<double>& q, const Eigen::MatrixXd& C) {
    const int n = static_cast<int>(p.size());
    const int k = static_cast<int>(q.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + k, n * k);
    Eigen::VectorXd b(n + k);
    Eigen::VectorXd c(n * k);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) {
            A(i, i * k + j) = 1.0;
            A(n + j, i * k + j) = 1.0;
            c(i * k + j) = C(i, j);
        }
    for (int i = 0; i < n; ++i) b(i) = p[static_cast<std::size_t>(i)];
    for (int j = 0; j < k; ++j) b(n + j) = q[static_cast<std::size_t>(j)];
    return solve_lp_equality(A, b, c);
}

/// V^pi = (I - gamma P_pi)^{-1} r_pi by a dense LU solve.
inline Eigen::VectorXd policy_value_direct(const std::vector<Eigen::MatrixXd>& T, const Eigen::MatrixXd& R,
                                           const Eigen::MatrixXd& pi, double gamma) {
    const int S = static_cast<int>(R.rows());
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S, S);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < static_cast<int>(T.size()); ++a) {
            P.row(s) += pi(s, a) * T[static_cast<std::size_t>(a)].row(s);
            r(s) += pi(s, a) * R(s, a);
        }
    return (Eigen::MatrixXd::Identity(S, S) - gamma * P).partialPivLu().solve(r);
}

/// Bisimulation metric by plain fixed-point iteration with coupling-LP W1.
inline Eigen::MatrixXd bisim_direct(const std::vector<Eigen::MatrixXd>& T, const Eigen::MatrixXd& R, double gamma,
                                    double tol) {
    const int S = static_cast<int>(R.rows());
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(S, S);
    for (int iter = 0; iter < 100000; ++iter) {
        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(S, S);
        for (int s = 0; s < S; ++s)
            for (int u = 0; u < S; ++u) {
                if (s == u) continue;
                double best = 0.0;
                for (int a = 0; a < static_cast<int>(T.size()); ++a) {
                    std::vector<double> p(static_cast<std::size_t>(S));
                    std::vector<double> q(static_cast<std::size_t>(S));
                    for (int x = 0; x < S; ++x) {
                        p[static_cast<std::size_t>(x)] = T[static_cast<std::size_t>(a)](s, x);
                        q[static_cast<std::size_t>(x)] = T[static_cast<std::size_t>(a)](u, x);
                    }
                    best = std::max(best, std::abs(R(s, a) - R(u, a)) + gamma * coupling_lp(p, q, d));
                }
                next(s, u) = best;
            }
        const double change = (next - d).cwiseAbs().maxCoeff();
        d = next;
        if (change <= tol) return d;
    }
    throw std::runtime_error("oracle bisimulation did not converge");
}

}  // namespace oracle
