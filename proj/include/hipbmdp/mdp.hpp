#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace hipbmdp {

/// Finite discounted MDP with explicit per-action transition matrices.
///
/// `transition(a)` is an S x S row-stochastic matrix whose row s is T(.|s,a).
/// Rewards are an S x A matrix with entries in [0, r_max]. Instances are
/// immutable once constructed; the constructor validates every invariant.
class TabularMDP {
public:
    TabularMDP(std::vector<Eigen::MatrixXd> transitions, Eigen::MatrixXd rewards, double gamma,
               double r_max);

    int n_states() const { return static_cast<int>(rewards_.rows()); }
    int n_actions() const { return static_cast<int>(rewards_.cols()); }
    double gamma() const { return gamma_; }
    double r_max() const { return r_max_; }

    const Eigen::MatrixXd& transition(int action) const { return transitions_[action]; }
    const std::vector<Eigen::MatrixXd>& transitions() const { return transitions_; }
    const Eigen::MatrixXd& rewards() const { return rewards_; }
    double reward(int state, int action) const { return rewards_(state, action); }

    /// Next-state distribution T(.|s,a) as a row vector.
    Eigen::RowVectorXd next_state_distribution(int state, int action) const {
        return transitions_[action].row(state);
    }

    /// Q(s,a) = R(s,a) + gamma * sum_s' T(s'|s,a) V(s').
    Eigen::MatrixXd backup(const Eigen::VectorXd& values) const;

    friend bool operator==(const TabularMDP& a, const TabularMDP& b);

private:
    std::vector<Eigen::MatrixXd> transitions_;
    Eigen::MatrixXd rewards_;
    double gamma_;
    double r_max_;
};

/// Deterministic (one action per state) or stochastic (row-stochastic S x A) policy.
class Policy {
public:
    static Policy deterministic(std::vector<int> actions, int n_actions);
    static Policy stochastic(Eigen::MatrixXd probabilities);
    static Policy uniform(int n_states, int n_actions);

    bool is_deterministic() const { return deterministic_; }
    int n_states() const { return static_cast<int>(probs_.rows()); }
    int n_actions() const { return static_cast<int>(probs_.cols()); }
    double probability(int state, int action) const { return probs_(state, action); }
    /// Only meaningful for deterministic policies.
    int action(int state) const { return actions_.at(state); }
    const std::vector<int>& actions() const { return actions_; }
    const Eigen::MatrixXd& probabilities() const { return probs_; }

    int sample(int state, std::mt19937_64& rng) const;

private:
    Policy() = default;
    bool deterministic_ = false;
    std::vector<int> actions_;
    Eigen::MatrixXd probs_;
};

struct PlanResult {
    Eigen::VectorXd values;
    Eigen::MatrixXd q_values;
    int iterations = 0;
    /// Sup-norm Bellman residual of the returned Q (V for policy evaluation).
    double residual = 0.0;
};

/// Iteration cap used by the planners: ceil(log(tol (1-gamma) / r_max) / log gamma) + margin.
int planner_iteration_cap(double gamma, double r_max, double tol);

/// Value iteration from Q = 0 until ||Q - B*Q||_inf <= tol.
/// Throws NumericalError if the iteration cap is reached.
PlanResult value_iteration(const TabularMDP& mdp, double tol);

/// Iterative policy evaluation until ||V - B_pi V||_inf <= tol.
PlanResult policy_evaluation(const TabularMDP& mdp, const Policy& policy, double tol);

/// Row-wise argmax of Q; ties go to the lowest action index.
Policy greedy_policy(const Eigen::MatrixXd& q_values);

}  // namespace hipbmdp
