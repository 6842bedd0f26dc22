#include "hipbmdp/mdp.hpp"

#include "hipbmdp/error.hpp"

#include <cmath>
#include <string>

namespace hipbmdp {

namespace {

constexpr double kRowSumTol = 1e-12;
constexpr int kIterationMargin = 1000;

void check_stochastic_rows(const Eigen::MatrixXd& m, const std::string& what) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        double sum = 0.0;
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double p = m(r, c);
            require(std::isfinite(p) && p >= 0.0, what + ": negative or non-finite probability in row " +
                                                      std::to_string(r));
            sum += p;
        }
        require(std::abs(sum - 1.0) <= kRowSumTol, what + ": row " + std::to_string(r) + " sums to " +
                                                       std::to_string(sum));
    }
}

}  // namespace

TabularMDP::TabularMDP(std::vector<Eigen::MatrixXd> transitions, Eigen::MatrixXd rewards, double gamma,
                       double r_max)
    : transitions_(std::move(transitions)), rewards_(std::move(rewards)), gamma_(gamma), r_max_(r_max) {
    require(rewards_.rows() > 0 && rewards_.cols() > 0, "TabularMDP: empty state or action set");
    require(static_cast<Eigen::Index>(transitions_.size()) == rewards_.cols(),
            "TabularMDP: one transition matrix per action required");
    require(gamma_ >= 0.0 && gamma_ < 1.0, "TabularMDP: gamma must lie in [0, 1)");
    require(std::isfinite(r_max_) && r_max_ > 0.0, "TabularMDP: r_max must be positive");
    for (std::size_t a = 0; a < transitions_.size(); ++a) {
        const auto& t = transitions_[a];
        require(t.rows() == rewards_.rows() && t.cols() == rewards_.rows(),
                "TabularMDP: transition matrix for action " + std::to_string(a) + " must be S x S");
        check_stochastic_rows(t, "TabularMDP action " + std::to_string(a));
    }
    for (Eigen::Index s = 0; s < rewards_.rows(); ++s)
        for (Eigen::Index a = 0; a < rewards_.cols(); ++a) {
            const double r = rewards_(s, a);
            require(std::isfinite(r) && r >= 0.0 && r <= r_max_, "TabularMDP: reward outside [0, r_max]");
        }
}

Eigen::MatrixXd TabularMDP::backup(const Eigen::VectorXd& values) const {
    Eigen::MatrixXd q(n_states(), n_actions());
    for (int a = 0; a < n_actions(); ++a) q.col(a) = rewards_.col(a) + gamma_ * (transitions_[a] * values);
    return q;
}

bool operator==(const TabularMDP& a, const TabularMDP& b) {
    if (a.gamma_ != b.gamma_ || a.r_max_ != b.r_max_) return false;
    if (a.rewards_.rows() != b.rewards_.rows() || a.rewards_.cols() != b.rewards_.cols()) return false;
    if (a.rewards_ != b.rewards_) return false;
    for (std::size_t i = 0; i < a.transitions_.size(); ++i)
        if (a.transitions_[i] != b.transitions_[i]) return false;
    return true;
}

Policy Policy::deterministic(std::vector<int> actions, int n_actions) {
    require(!actions.empty() && n_actions > 0, "Policy: empty deterministic policy");
    Policy p;
    p.deterministic_ = true;
    p.probs_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
    for (std::size_t s = 0; s < actions.size(); ++s) {
        require(actions[s] >= 0 && actions[s] < n_actions, "Policy: action index out of range");
        p.probs_(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
    }
    p.actions_ = std::move(actions);
    return p;
}

Policy Policy::stochastic(Eigen::MatrixXd probabilities) {
    require(probabilities.rows() > 0 && probabilities.cols() > 0, "Policy: empty stochastic policy");
    check_stochastic_rows(probabilities, "Policy");
    Policy p;
    p.probs_ = std::move(probabilities);
    return p;
}

Policy Policy::uniform(int n_states, int n_actions) {
    return stochastic(Eigen::MatrixXd::Constant(n_states, n_actions, 1.0 / n_actions));
}

int Policy::sample(int state, std::mt19937_64& rng) const {
    if (deterministic_) return actions_[state];
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng);
    double acc = 0.0;
    for (int a = 0; a < n_actions(); ++a) {
        acc += probs_(state, a);
        if (u < acc) return a;
    }
    return n_actions() - 1;
}

int planner_iteration_cap(double gamma, double r_max, double tol) {
    require(tol > 0.0 && r_max > 0.0, "planner_iteration_cap: tol and r_max must be positive");
    if (gamma <= 0.0) return kIterationMargin;
    const double ratio = tol * (1.0 - gamma) / r_max;
    if (ratio >= 1.0) return kIterationMargin;
    return static_cast<int>(std::ceil(std::log(ratio) / std::log(gamma))) + kIterationMargin;
}

PlanResult value_iteration(const TabularMDP& mdp, double tol) {
    require(tol > 0.0, "value_iteration: tol must be positive");
    const int cap = planner_iteration_cap(mdp.gamma(), mdp.r_max(), tol);
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(mdp.n_states(), mdp.n_actions());
    for (int it = 1; it <= cap; ++it) {
        Eigen::MatrixXd next = mdp.backup(q.rowwise().maxCoeff());
        const double delta = (next - q).cwiseAbs().maxCoeff();
        q = std::move(next);
        if (!std::isfinite(delta)) throw NumericalError("value_iteration: non-finite iterate");
        // ||q - B q|| <= gamma * delta for the freshly backed-up iterate.
        if (delta <= tol) return PlanResult{q.rowwise().maxCoeff(), q, it, mdp.gamma() * delta};
    }
    throw NumericalError("value_iteration: no convergence within " + std::to_string(cap) + " iterations");
}

PlanResult policy_evaluation(const TabularMDP& mdp, const Policy& policy, double tol) {
    require(tol > 0.0, "policy_evaluation: tol must be positive");
    require(policy.n_states() == mdp.n_states() && policy.n_actions() == mdp.n_actions(),
            "policy_evaluation: policy shape does not match the MDP");
    const int S = mdp.n_states();
    const Eigen::MatrixXd& pi = policy.probabilities();
    Eigen::VectorXd r_pi = (pi.cwiseProduct(mdp.rewards())).rowwise().sum();
    Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(S, S);
    for (int a = 0; a < mdp.n_actions(); ++a) p_pi += pi.col(a).asDiagonal() * mdp.transition(a);

    const int cap = planner_iteration_cap(mdp.gamma(), mdp.r_max(), tol);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(S);
    for (int it = 1; it <= cap; ++it) {
        Eigen::VectorXd next = r_pi + mdp.gamma() * (p_pi * v);
        const double delta = (next - v).cwiseAbs().maxCoeff();
        v = std::move(next);
        if (!std::isfinite(delta)) throw NumericalError("policy_evaluation: non-finite iterate");
        if (delta <= tol) return PlanResult{v, mdp.backup(v), it, mdp.gamma() * delta};
    }
    throw NumericalError("policy_evaluation: no convergence within " + std::to_string(cap) + " iterations");
}

Policy greedy_policy(const Eigen::MatrixXd& q_values) {
    require(q_values.rows() > 0 && q_values.cols() > 0, "greedy_policy: empty Q");
    require(q_values.allFinite(), "greedy_policy: Q must be finite");
    std::vector<int> actions(static_cast<std::size_t>(q_values.rows()), 0);
    for (Eigen::Index s = 0; s < q_values.rows(); ++s) {
        int best = 0;
        for (Eigen::Index a = 1; a < q_values.cols(); ++a)
            if (q_values(s, a) > q_values(s, best)) best = static_cast<int>(a);
        actions[static_cast<std::size_t>(s)] = best;
    }
    return Policy::deterministic(std::move(actions), static_cast<int>(q_values.cols()));
}

}  // namespace hipbmdp
