#pragma once

#include "hipbmdp/mdp.hpp"

#include <cstdint>
#include <vector>

namespace hipbmdp {

/// Latent state -> observation emission with disjoint blocks.
///
/// `blocks[s]` lists the observation ids state s can emit and `probs[s]` the
/// emission probabilities over that block. With `violation_prob` > 0 the
/// emitted observation is, with that probability, replaced by one emitted from
/// the previous latent state ("sticky" observations), so blocks overlap in
/// effect and an observation no longer identifies its generating state.
struct BlockEmission {
    int n_observations = 0;
    std::vector<std::vector<int>> blocks;
    std::vector<std::vector<double>> probs;
    double violation_prob = 0.0;

    /// `obs_per_state` observations per state, uniform emission, contiguous ids.
    static BlockEmission uniform(int n_states, int obs_per_state, double violation_prob = 0.0);
    /// One observation per state.
    static BlockEmission identity(int n_states) { return uniform(n_states, 1); }

    int n_states() const { return static_cast<int>(blocks.size()); }
    void validate() const;
};

struct ObservationMDP {
    TabularMDP mdp;
    /// Generating latent state of each observation id (the ground-truth block map).
    std::vector<int> latent_of;
    /// False when the emission was built with a positive violation probability.
    bool block_structure_holds = true;
};

/// Observation-space MDP: T_obs(x'|x,a) = sum_s' q(x'|s') T(s'|s(x),a),
/// R_obs(x,a) = R(s(x),a). Observation ids are relabeled by a permutation drawn
/// from `seed`. With violation probability p > 0 an observation x of block s(x)
/// stands for the latent belief b_x = (1 - p) delta_{s(x)} + p uniform, and the
/// next observation comes from the next state's block with probability 1 - p and
/// from the current state's block otherwise.
ObservationMDP lift_to_observations(const TabularMDP& mdp, const BlockEmission& emission,
                                    std::uint64_t seed);

}  // namespace hipbmdp
