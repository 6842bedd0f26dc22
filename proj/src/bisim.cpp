#include "hipbmdp/bisim.hpp"

#include "hipbmdp/error.hpp"
#include "hipbmdp/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace hipbmdp {

namespace {

/// rows[a][s] = T(.|s,a) as a contiguous vector.
using RowCache = std::vector<std::vector<std::vector<double>>>;

RowCache cache_rows(const TabularMDP& mdp) {
    RowCache rows(static_cast<std::size_t>(mdp.n_actions()));
    for (int a = 0; a < mdp.n_actions(); ++a)
        for (int s = 0; s < mdp.n_states(); ++s) {
            const auto r = mdp.next_state_distribution(s, a);
            rows[a].emplace_back(r.data(), r.data() + r.size());
        }
    return rows;
}

Eigen::MatrixXd apply_operator(const TabularMDP& mdp, const RowCache& rows, const Eigen::MatrixXd& d) {
    const int S = mdp.n_states();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(S, S);
    for (int s = 0; s < S; ++s)
        for (int t = s + 1; t < S; ++t) {
            double best = 0.0;
            for (int a = 0; a < mdp.n_actions(); ++a) {
                const double gap = std::abs(mdp.reward(s, a) - mdp.reward(t, a)) +
                                   mdp.gamma() * transport_cost(rows[a][s], rows[a][t], d);
                best = std::max(best, gap);
            }
            out(s, t) = out(t, s) = best;
        }
    return out;
}

void check_iterate(const TabularMDP& mdp, const Eigen::MatrixXd& d) {
    require(d.rows() == mdp.n_states() && d.cols() == mdp.n_states(), "bisim_operator: d must be S x S");
    require(d.allFinite() && (d.array() >= 0.0).all(), "bisim_operator: d must be finite and nonnegative");
    for (Eigen::Index i = 0; i < d.rows(); ++i) require(d(i, i) == 0.0, "bisim_operator: d must have a zero diagonal");
}

}  // namespace

Eigen::MatrixXd bisim_operator(const TabularMDP& mdp, const Eigen::MatrixXd& d) {
    check_iterate(mdp, d);
    return apply_operator(mdp, cache_rows(mdp), d);
}

BisimMetric bisim_metric(const TabularMDP& mdp, double tol, int max_iters) {
    require(tol > 0.0, "bisim_metric: tol must be positive");
    require(max_iters > 0, "bisim_metric: max_iters must be positive");
    const auto rows = cache_rows(mdp);
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(mdp.n_states(), mdp.n_states());
    for (int it = 1; it <= max_iters; ++it) {
        Eigen::MatrixXd next = apply_operator(mdp, rows, d);
        const double residual = (next - d).cwiseAbs().maxCoeff();
        if (!std::isfinite(residual)) throw NumericalError("bisim_metric: non-finite iterate");
        if (residual <= tol) return BisimMetric{std::move(next), residual, it};
        d = std::move(next);
    }
    throw NumericalError("bisim_metric: no convergence within " + std::to_string(max_iters) + " iterations");
}

double check_lipschitz_value(const TabularMDP& mdp, const BisimMetric& d, double planner_tol) {
    require(d.d.rows() == mdp.n_states() && d.d.cols() == mdp.n_states(),
            "check_lipschitz_value: metric does not match the MDP");
    const Eigen::VectorXd v = value_iteration(mdp, planner_tol).values;
    const int S = mdp.n_states();
    if (S == 1) return 0.0;
    double worst = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < S; ++s)
        for (int t = 0; t < S; ++t)
            if (s != t) worst = std::max(worst, std::abs(v(s) - v(t)) - d.d(s, t) / (1.0 - mdp.gamma()));
    return worst;
}

StateAbstraction::StateAbstraction(std::vector<int> phi) : phi_(std::move(phi)) {
    require(!phi_.empty(), "StateAbstraction: empty map");
    int k = 0;
    for (int z : phi_) {
        require(z >= 0, "StateAbstraction: abstract ids must be nonnegative");
        k = std::max(k, z + 1);
    }
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int z : phi_) ++sizes[static_cast<std::size_t>(z)];
    weights_.resize(phi_.size());
    for (std::size_t x = 0; x < phi_.size(); ++x) {
        require(sizes[static_cast<std::size_t>(phi_[x])] > 0, "StateAbstraction: map must be surjective");
        weights_[x] = 1.0 / sizes[static_cast<std::size_t>(phi_[x])];
    }
    build();
}

StateAbstraction::StateAbstraction(std::vector<int> phi, std::vector<double> weights)
    : phi_(std::move(phi)), weights_(std::move(weights)) {
    require(!phi_.empty(), "StateAbstraction: empty map");
    require(phi_.size() == weights_.size(), "StateAbstraction: one weight per observation required");
    build();
}

StateAbstraction StateAbstraction::identity(int n) {
    require(n > 0, "StateAbstraction: size must be positive");
    std::vector<int> phi(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) phi[static_cast<std::size_t>(i)] = i;
    return StateAbstraction(std::move(phi));
}

void StateAbstraction::build() {
    n_abstract_ = 0;
    for (int z : phi_) {
        require(z >= 0, "StateAbstraction: abstract ids must be nonnegative");
        n_abstract_ = std::max(n_abstract_, z + 1);
    }
    members_.assign(static_cast<std::size_t>(n_abstract_), {});
    for (std::size_t x = 0; x < phi_.size(); ++x) members_[static_cast<std::size_t>(phi_[x])].push_back(static_cast<int>(x));
    for (int z = 0; z < n_abstract_; ++z) {
        const auto& m = members_[static_cast<std::size_t>(z)];
        require(!m.empty(), "StateAbstraction: map must be surjective onto 0..n_abstract-1");
        double sum = 0.0;
        for (int x : m) {
            const double w = weights_[static_cast<std::size_t>(x)];
            require(std::isfinite(w) && w >= 0.0, "StateAbstraction: weights must be nonnegative");
            sum += w;
        }
        require(std::abs(sum - 1.0) <= 1e-12, "StateAbstraction: block weights must sum to 1");
    }
}

StateAbstraction abstraction_from_metric(const BisimMetric& d, double epsilon, double slack) {
    require(epsilon >= 0.0, "abstraction_from_metric: epsilon must be nonnegative");
    const int n = static_cast<int>(d.d.rows());
    require(n > 0 && d.d.cols() == n, "abstraction_from_metric: metric must be square");
    std::vector<int> representatives;
    std::vector<int> phi(static_cast<std::size_t>(n), -1);
    for (int x = 0; x < n; ++x) {
        for (std::size_t c = 0; c < representatives.size(); ++c)
            if (d.d(x, representatives[c]) <= epsilon + slack) {
                phi[static_cast<std::size_t>(x)] = static_cast<int>(c);
                break;
            }
        if (phi[static_cast<std::size_t>(x)] < 0) {
            phi[static_cast<std::size_t>(x)] = static_cast<int>(representatives.size());
            representatives.push_back(x);
        }
    }
    return StateAbstraction(std::move(phi));
}

Eigen::MatrixXd lifted_transitions(const TabularMDP& mdp, const StateAbstraction& phi) {
    require(phi.n_observations() == mdp.n_states(), "lifted_transitions: abstraction is not total on the MDP");
    const int X = mdp.n_states();
    const int A = mdp.n_actions();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(X * A, phi.n_abstract());
    for (int a = 0; a < A; ++a) {
        const auto& t = mdp.transition(a);
        for (int x = 0; x < X; ++x)
            for (int y = 0; y < X; ++y) out(x * A + a, phi(y)) += t(x, y);
    }
    return out;
}

AbstractionErrors abstraction_errors(const TabularMDP& obs_mdp, const StateAbstraction& phi,
                                     const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& theta_true) {
    require(theta_hat.size() == theta_true.size(), "abstraction_errors: theta dimensions differ");
    const Eigen::MatrixXd lifted = lifted_transitions(obs_mdp, phi);
    const int A = obs_mdp.n_actions();
    AbstractionErrors e;
    for (int z = 0; z < phi.n_abstract(); ++z) {
        const auto& m = phi.members(z);
        for (std::size_t p = 0; p < m.size(); ++p)
            for (std::size_t q = p + 1; q < m.size(); ++q)
                for (int a = 0; a < A; ++a) {
                    e.eps_R = std::max(e.eps_R, std::abs(obs_mdp.reward(m[p], a) - obs_mdp.reward(m[q], a)));
                    e.eps_T = std::max(e.eps_T, (lifted.row(m[p] * A + a) - lifted.row(m[q] * A + a)).lpNorm<1>());
                }
    }
    e.eps_theta = (theta_hat - theta_true).lpNorm<1>();
    return e;
}

double cross_task_eps_T(const TabularMDP& mdp_i, const TabularMDP& mdp_j, const StateAbstraction& phi) {
    require(mdp_i.n_states() == mdp_j.n_states() && mdp_i.n_actions() == mdp_j.n_actions(),
            "cross_task_eps_T: task shapes differ");
    const Eigen::MatrixXd li = lifted_transitions(mdp_i, phi);
    const Eigen::MatrixXd lj = lifted_transitions(mdp_j, phi);
    const int A = mdp_i.n_actions();
    double eps = 0.0;
    for (int z = 0; z < phi.n_abstract(); ++z)
        for (int x1 : phi.members(z))
            for (int x2 : phi.members(z))
                for (int a = 0; a < A; ++a) eps = std::max(eps, (li.row(x1 * A + a) - lj.row(x2 * A + a)).lpNorm<1>());
    return eps;
}

TabularMDP build_abstract_mdp(const TabularMDP& obs_mdp, const StateAbstraction& phi) {
    const Eigen::MatrixXd lifted = lifted_transitions(obs_mdp, phi);
    const int A = obs_mdp.n_actions();
    const int Z = phi.n_abstract();
    std::vector<Eigen::MatrixXd> transitions(static_cast<std::size_t>(A), Eigen::MatrixXd::Zero(Z, Z));
    Eigen::MatrixXd rewards = Eigen::MatrixXd::Zero(Z, A);
    for (int z = 0; z < Z; ++z)
        for (int x : phi.members(z)) {
            const double w = phi.weight(x);
            for (int a = 0; a < A; ++a) {
                rewards(z, a) += w * obs_mdp.reward(x, a);
                transitions[static_cast<std::size_t>(a)].row(z) += w * lifted.row(x * A + a);
            }
        }
    for (auto& t : transitions)
        for (int z = 0; z < Z; ++z) {
            const double sum = t.row(z).sum();
            if (sum != 1.0) t.row(z) /= sum;
        }
    rewards = rewards.cwiseMax(0.0).cwiseMin(obs_mdp.r_max());
    return TabularMDP(std::move(transitions), std::move(rewards), obs_mdp.gamma(), obs_mdp.r_max());
}

Eigen::MatrixXd lift_q(const Eigen::MatrixXd& abstract_q, const StateAbstraction& phi) {
    require(abstract_q.rows() == phi.n_abstract(), "lift_q: Q rows do not match the abstraction");
    Eigen::MatrixXd out(phi.n_observations(), abstract_q.cols());
    for (int x = 0; x < phi.n_observations(); ++x) out.row(x) = abstract_q.row(phi(x));
    return out;
}

}  // namespace hipbmdp
