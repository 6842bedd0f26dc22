#pragma once

#include "hipbmdp/mdp.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace hipbmdp {

struct BisimMetric {
    Eigen::MatrixXd d;
    /// ||F(d_prev) - d_prev||_inf for the last step; bounds the residual of `d` from above.
    double residual = 0.0;
    int iterations = 0;
};

/// One application of F(d)(s,t) = max_a |r(s,a) - r(t,a)| + gamma * W1_d(T(s,a), T(t,a)).
Eigen::MatrixXd bisim_operator(const TabularMDP& mdp, const Eigen::MatrixXd& d);

/// Fixed point of F by iteration from d = 0 until ||F(d) - d||_inf <= tol.
/// Throws NumericalError after `max_iters` applications.
BisimMetric bisim_metric(const TabularMDP& mdp, double tol, int max_iters = 100000);

/// max_{s,t} |V*(s) - V*(t)| - d(s,t) / (1 - gamma). Nonpositive up to planner slack.
double check_lipschitz_value(const TabularMDP& mdp, const BisimMetric& d, double planner_tol = 1e-10);

/// Surjective map from observations to abstract states with a member weighting
/// inside every block (weights of one block sum to 1).
class StateAbstraction {
public:
    /// Uniform weights inside each block.
    explicit StateAbstraction(std::vector<int> phi);
    StateAbstraction(std::vector<int> phi, std::vector<double> weights);

    static StateAbstraction identity(int n);

    int n_observations() const { return static_cast<int>(phi_.size()); }
    int n_abstract() const { return n_abstract_; }
    int operator()(int x) const { return phi_[x]; }
    const std::vector<int>& map() const { return phi_; }
    double weight(int x) const { return weights_[x]; }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<int>& members(int z) const { return members_[z]; }

private:
    void build();

    std::vector<int> phi_;
    std::vector<double> weights_;
    int n_abstract_ = 0;
    std::vector<std::vector<int>> members_;
};

/// Greedy epsilon-ball clustering: states scanned in index order join the first
/// cluster whose representative is within epsilon (plus `slack`), else open a
/// new cluster.
StateAbstraction abstraction_from_metric(const BisimMetric& d, double epsilon, double slack = 1e-9);

struct AbstractionErrors {
    double eps_R = 0.0;
    double eps_T = 0.0;
    double eps_theta = 0.0;
};

/// Phi T(x,a): next-observation mass summed within each abstract block. Row (x * A + a).
Eigen::MatrixXd lifted_transitions(const TabularMDP& mdp, const StateAbstraction& phi);

/// eps_R and eps_T over phi-equivalent pairs of one task; eps_theta = ||theta_hat - theta_true||_1.
AbstractionErrors abstraction_errors(const TabularMDP& obs_mdp, const StateAbstraction& phi,
                                     const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& theta_true);

/// Cross-task transition error: sup over phi-equivalent x1, x2 (x1 = x2 included)
/// and actions of ||Phi T_i(x1,a) - Phi T_j(x2,a)||_1.
double cross_task_eps_T(const TabularMDP& mdp_i, const TabularMDP& mdp_j, const StateAbstraction& phi);

/// Weighted-average abstract MDP: rewards and block-summed transitions are
/// convex combinations of member rows with the abstraction's weights.
TabularMDP build_abstract_mdp(const TabularMDP& obs_mdp, const StateAbstraction& phi);

/// [Q]_M(x, a) = Q(phi(x), a).
Eigen::MatrixXd lift_q(const Eigen::MatrixXd& abstract_q, const StateAbstraction& phi);

}  // namespace hipbmdp
