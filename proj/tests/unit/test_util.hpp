#pragma once

#include "hipbmdp/family.hpp"
#include "hipbmdp/mdp.hpp"
#include "hipbmdp/transport.hpp"

#include <Eigen/Dense>

#include <random>
#include <vector>

namespace testutil {

inline std::vector<double> random_simplex(int n, std::mt19937_64& rng, double sparsity = 0.0) {
    std::exponential_distribution<double> e(1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(static_cast<std::size_t>(n));
    double total = 0.0;
    for (auto& x : p) {
        x = u(rng) < sparsity ? 0.0 : e(rng);
        total += x;
    }
    if (total == 0.0) {
        p[0] = 1.0;
        return p;
    }
    for (auto& x : p) x /= total;
    return p;
}

/// Random metric: L1 distances between random points, optionally rounded to small integers.
inline Eigen::MatrixXd random_metric(int n, std::mt19937_64& rng, bool integer = false) {
    std::uniform_real_distribution<double> u(0.0, 3.0);
    const int dims = 2;
    Eigen::MatrixXd pts(dims, n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < dims; ++k) pts(k, i) = integer ? std::floor(u(rng)) : u(rng);
    Eigen::MatrixXd d(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) d(i, j) = (pts.col(i) - pts.col(j)).lpNorm<1>();
    return d;
}

inline hipbmdp::TabularMDP random_mdp(int S, int A, double gamma, std::mt19937_64& rng, double sparsity = 0.3,
                                      double r_max = 1.0) {
    std::vector<Eigen::MatrixXd> T(static_cast<std::size_t>(A), Eigen::MatrixXd(S, S));
    for (auto& t : T)
        for (int s = 0; s < S; ++s) {
            const auto row = random_simplex(S, rng, sparsity);
            for (int x = 0; x < S; ++x) t(s, x) = row[static_cast<std::size_t>(x)];
        }
    std::uniform_real_distribution<double> u(0.0, r_max);
    Eigen::MatrixXd R(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) R(s, a) = u(rng);
    return hipbmdp::TabularMDP(std::move(T), std::move(R), gamma, r_max);
}

inline Eigen::MatrixXd random_stochastic_policy(int S, int A, std::mt19937_64& rng) {
    Eigen::MatrixXd pi(S, A);
    for (int s = 0; s < S; ++s) {
        const auto row = random_simplex(A, rng);
        for (int a = 0; a < A; ++a) pi(s, a) = row[static_cast<std::size_t>(a)];
    }
    return pi;
}

/// Two absorbing states with one action and rewards r1, r2.
inline hipbmdp::TabularMDP absorbing_pair(double r1, double r2, double gamma) {
    Eigen::MatrixXd R(2, 1);
    R << r1, r2;
    return hipbmdp::TabularMDP({Eigen::MatrixXd::Identity(2, 2)}, R, gamma, std::max({1.0, r1, r2}));
}

inline std::vector<double> row(const Eigen::MatrixXd& m, int r) {
    std::vector<double> out(static_cast<std::size_t>(m.cols()));
    for (int c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(c)] = m(r, c);
    return out;
}

}  // namespace testutil
