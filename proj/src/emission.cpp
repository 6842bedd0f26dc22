#include "hipbmdp/emission.hpp"

#include "hipbmdp/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace hipbmdp {

BlockEmission BlockEmission::uniform(int n_states, int obs_per_state, double violation_prob) {
    require(n_states > 0 && obs_per_state > 0, "BlockEmission: sizes must be positive");
    BlockEmission e;
    e.n_observations = n_states * obs_per_state;
    e.violation_prob = violation_prob;
    for (int s = 0; s < n_states; ++s) {
        std::vector<int> block(static_cast<std::size_t>(obs_per_state));
        std::iota(block.begin(), block.end(), s * obs_per_state);
        e.blocks.push_back(std::move(block));
        e.probs.emplace_back(static_cast<std::size_t>(obs_per_state), 1.0 / obs_per_state);
    }
    e.validate();
    return e;
}

void BlockEmission::validate() const {
    require(n_observations > 0, "BlockEmission: n_observations must be positive");
    require(!blocks.empty() && blocks.size() == probs.size(), "BlockEmission: one probability row per block");
    require(violation_prob >= 0.0 && violation_prob < 1.0, "BlockEmission: violation_prob must lie in [0, 1)");
    std::vector<int> owner(static_cast<std::size_t>(n_observations), -1);
    for (std::size_t s = 0; s < blocks.size(); ++s) {
        require(!blocks[s].empty() && blocks[s].size() == probs[s].size(),
                "BlockEmission: block and probability sizes differ");
        double sum = 0.0;
        for (std::size_t k = 0; k < blocks[s].size(); ++k) {
            const int x = blocks[s][k];
            require(x >= 0 && x < n_observations, "BlockEmission: observation id out of range");
            require(owner[static_cast<std::size_t>(x)] < 0, "BlockEmission: blocks overlap");
            owner[static_cast<std::size_t>(x)] = static_cast<int>(s);
            require(std::isfinite(probs[s][k]) && probs[s][k] >= 0.0, "BlockEmission: negative emission probability");
            sum += probs[s][k];
        }
        require(std::abs(sum - 1.0) <= 1e-12, "BlockEmission: emission probabilities must sum to 1");
    }
    for (int o : owner) require(o >= 0, "BlockEmission: every observation must belong to a block");
}

ObservationMDP lift_to_observations(const TabularMDP& mdp, const BlockEmission& emission, std::uint64_t seed) {
    emission.validate();
    require(emission.n_states() == mdp.n_states(), "lift_to_observations: emission state count differs from MDP");
    const int S = mdp.n_states();
    const int A = mdp.n_actions();
    const int X = emission.n_observations;
    const double p = emission.violation_prob;

    std::vector<int> relabel(static_cast<std::size_t>(X));
    std::iota(relabel.begin(), relabel.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(relabel.begin(), relabel.end(), rng);

    // q(x | s) over relabeled ids, and the block of every relabeled id.
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(S, X);
    std::vector<int> latent_of(static_cast<std::size_t>(X), 0);
    for (int s = 0; s < S; ++s)
        for (std::size_t k = 0; k < emission.blocks[s].size(); ++k) {
            const int x = relabel[static_cast<std::size_t>(emission.blocks[s][k])];
            q(s, x) = emission.probs[s][k];
            latent_of[static_cast<std::size_t>(x)] = s;
        }

    Eigen::MatrixXd belief = Eigen::MatrixXd::Zero(X, S);
    for (int x = 0; x < X; ++x) {
        belief.row(x).setConstant(p / S);
        belief(x, latent_of[static_cast<std::size_t>(x)]) += 1.0 - p;
    }

    std::vector<Eigen::MatrixXd> transitions;
    transitions.reserve(static_cast<std::size_t>(A));
    Eigen::MatrixXd rewards(X, A);
    for (int a = 0; a < A; ++a) {
        // Next-observation law from each latent state s: (1 - p) T_a q + p q.
        Eigen::MatrixXd from_latent = (1.0 - p) * (mdp.transition(a) * q);
        if (p > 0.0) from_latent += p * q;
        Eigen::MatrixXd t(X, X);
        for (int x = 0; x < X; ++x) {
            if (p == 0.0) {
                t.row(x) = from_latent.row(latent_of[static_cast<std::size_t>(x)]);
                rewards(x, a) = mdp.reward(latent_of[static_cast<std::size_t>(x)], a);
            } else {
                t.row(x) = belief.row(x) * from_latent;
                rewards(x, a) = std::clamp(belief.row(x).dot(mdp.rewards().col(a)), 0.0, mdp.r_max());
            }
            const double sum = t.row(x).sum();
            if (sum != 1.0) t.row(x) /= sum;
        }
        transitions.push_back(std::move(t));
    }
    return ObservationMDP{TabularMDP(std::move(transitions), std::move(rewards), mdp.gamma(), mdp.r_max()),
                          std::move(latent_of), p == 0.0};
}

}  // namespace hipbmdp
