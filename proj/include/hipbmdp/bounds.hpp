#pragma once

#include "hipbmdp/bisim.hpp"
#include "hipbmdp/emission.hpp"
#include "hipbmdp/family.hpp"
#include "hipbmdp/mdp.hpp"
#include "hipbmdp/theta_metric.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace hipbmdp {

enum class Theorem {
    QError,              ///< abstract-model Q* error for one task
    Transfer,            ///< abstract model of task i used on task j
    SampleComplexity,    ///< certainty-equivalence abstract model from a replay dataset
    SingleTaskBisim,     ///< approximate bisimulation abstraction of a Block MDP
    ValueDifference,     ///< V^pi gap between two members
    OptValueDifference,  ///< V* gap between two members
    AvgApproxError,      ///< mean V* gap between members and their estimates
};

std::string to_string(Theorem theorem);
/// Accepts the names produced by to_string. Throws ValidationError otherwise.
Theorem theorem_from_string(const std::string& name);
/// Every theorem except SampleComplexity.
bool is_deterministic(Theorem theorem);
const std::vector<Theorem>& all_theorems();

/// What stands in for the hidden-parameter gap on the RHS of the abstraction bounds.
enum class ThetaGap {
    TaskMetric,  ///< theta_distance between the instantiated latent MDPs
    Parameter,   ///< ||theta_hat - theta||_1 in parameter space
};

std::string to_string(ThetaGap gap);
ThetaGap theta_gap_from_string(const std::string& name);

struct Provenance {
    std::uint64_t family_seed = 0;
    std::vector<std::string> envs;
    std::vector<int> phi;
    std::vector<std::vector<double>> thetas;
    std::int64_t dataset_size = -1;
    double delta = 0.0;
    std::string ground_metric;
    std::string theta_gap;
};

struct BoundReport {
    Theorem theorem = Theorem::QError;
    double lhs = 0.0;
    double rhs = 0.0;
    /// rhs - lhs.
    double slack = 0.0;
    double tolerance = 0.0;
    /// slack >= -tolerance.
    bool holds = false;
    /// Every RHS ingredient plus diagnostics, by name.
    std::map<std::string, double> terms;
    Provenance inputs;
};

/// tolerance = 1e-6 * max(1, |rhs|) + planner_slack.
BoundReport make_report(Theorem theorem, double lhs, double rhs, double planner_slack,
                        std::map<std::string, double> terms, Provenance inputs);

struct VerifyOptions {
    double planner_tol = 1e-10;
    double bisim_tol = 1e-8;
    GroundMetricKind ground_metric = GroundMetricKind::OneHotL1;
    ThetaGap theta_gap = ThetaGap::TaskMetric;
};

/// A HiP family observed through a block emission: every member, and every
/// estimate theta_hat, is lifted with the same emission and relabeling seed.
class ObservedFamily {
public:
    ObservedFamily(HiPFamily family, BlockEmission emission, std::uint64_t lift_seed,
                   std::uint64_t family_seed = 0);

    const HiPFamily& family() const { return family_; }
    const BlockEmission& emission() const { return emission_; }
    std::uint64_t family_seed() const { return family_seed_; }

    ObservationMDP observe(const Eigen::VectorXd& theta) const;
    ObservationMDP observe_member(int index) const { return observe(family_.theta(index)); }
    /// Block membership map phi(x) = latent state of x.
    StateAbstraction ground_truth_abstraction() const;

private:
    HiPFamily family_;
    BlockEmission emission_;
    std::uint64_t lift_seed_;
    std::uint64_t family_seed_;
};

/// d(theta_a, theta_b) as selected by options.theta_gap.
double theta_gap(const HiPFamily& family, const Eigen::VectorXd& theta_a, const Eigen::VectorXd& theta_b,
                 const VerifyOptions& options);

/// ||Q*_M - [Q*_Mbar]_M|| with Mbar built on the observation MDP of theta_hat.
/// RHS = eps_R + gamma (eps_T + eps_theta) R_max / (2 (1 - gamma)).
BoundReport verify_q_error(const ObservedFamily& family, int env, const StateAbstraction& phi,
                           const Eigen::VectorXd& theta_hat, const VerifyOptions& options = {});

/// Abstract model built for task i (from theta_hat_i) evaluated on task j.
/// RHS adds d(theta_i, theta_j) to the transition terms.
BoundReport verify_transfer(const ObservedFamily& family, int i, int j, const StateAbstraction& phi,
                            const Eigen::VectorXd& theta_hat_i, const VerifyOptions& options = {});

/// RHS = eps_R + gamma eps_T R_max / (2 (1 - gamma)).
BoundReport verify_single_task_bisim(const TabularMDP& obs_mdp, const StateAbstraction& phi,
                                     const VerifyOptions& options = {});

/// ||V^pi_i - V^pi_j|| <= gamma / (1 - gamma) d(theta_i, theta_j).
BoundReport verify_value_difference(const HiPFamily& family, int i, int j, const Policy& pi,
                                    const VerifyOptions& options = {});

/// ||V*_i - V*_j|| <= gamma / (1 - gamma)^2 d(theta_i, theta_j).
BoundReport verify_opt_value_difference(const HiPFamily& family, int i, int j,
                                        const VerifyOptions& options = {});

/// mean_i ||V*_{theta_hat_i} - V*_{theta_i}|| <= gamma / (1 - gamma)^2 max_i d(theta_hat_i, theta_i).
BoundReport verify_avg_approx_error(const HiPFamily& family, const std::vector<Eigen::VectorXd>& theta_hats,
                                    const VerifyOptions& options = {});

struct ObservedTransition {
    int obs = 0;
    int action = 0;
    int next_obs = 0;
    double reward = 0.0;
    int env_id = 0;

    friend bool operator==(const ObservedTransition&, const ObservedTransition&) = default;
};

struct ReplayDataset {
    std::vector<ObservedTransition> samples;

    /// |D_{z,a}| as an n_abstract x n_actions matrix.
    Eigen::MatrixXi counts(const StateAbstraction& phi, int n_actions) const;
    /// min over (z, a) of |D_{z,a}|.
    int n_phi(const StateAbstraction& phi, int n_actions) const;
    void append(const ReplayDataset& other);
};

/// `per_pair` independent draws for every (abstract state, action): x uniform inside the block, x' ~ T(.|x,a).
ReplayDataset draw_stratified(const ObservationMDP& obs, int env_id, const StateAbstraction& phi, int per_pair,
                              std::uint64_t seed);
/// `n` independent uniform (x, a) draws.
ReplayDataset draw_uniform(const ObservationMDP& obs, int env_id, int n, std::uint64_t seed);
/// Consecutive transitions of policy rollouts. The samples are not independent, which the
/// sample-complexity bound requires; use only as a diagnostic.
ReplayDataset draw_trajectories(const ObservationMDP& obs, int env_id, const Policy& policy, int episodes,
                                int horizon, std::uint64_t seed);

/// Certainty-equivalence abstract MDP: empirical next-block frequencies and mean rewards per (z, a).
/// Throws ValidationError when some (z, a) has no sample.
TabularMDP empirical_abstract_mdp(const ReplayDataset& dataset, const StateAbstraction& phi, int n_actions,
                                  double gamma, double r_max);

/// The dataset is pooled over every env id it contains. eps_theta is the largest gap between
/// the target's theta and that of any contributing environment (0 for target-only data).
BoundReport verify_sample_complexity(const ObservedFamily& family, int env, const StateAbstraction& phi,
                                     const ReplayDataset& dataset, double delta,
                                     const VerifyOptions& options = {});

struct SweepConfig {
    int instances = 500;
    std::uint64_t seed = 0;
    double gamma = 0.9;
    double r_max = 1.0;
    int max_latent_states = 6;
    int obs_per_state = 2;
    int max_actions = 4;
    int n_members = 8;
    std::vector<double> perturbation_scales{0.1, 0.5, 1.0};
    std::vector<double> epsilons{0.01, 0.1, 0.5};
    /// theta_hat = theta + noise * scale * N(0, 1); one level drawn per instance.
    std::vector<double> theta_noise{0.0, 0.1, 0.5};
    VerifyOptions options;
};

/// Randomized instances of one deterministic theorem; instance k is seeded from (seed, k).
std::vector<BoundReport> sweep_deterministic(Theorem theorem, const SweepConfig& config);

struct SampleSweepConfig {
    int datasets = 200;
    int per_pair = 100;
    double delta = 0.1;
    std::uint64_t seed = 0;
    FamilySpec family;
    int obs_per_state = 2;
    VerifyOptions options;
};

/// One fixed family and target member, ground-truth abstraction, theta_hat = theta;
/// `datasets` independent stratified resamples.
std::vector<BoundReport> sweep_sample_complexity(const SampleSweepConfig& config);

struct SweepSummary {
    Theorem theorem = Theorem::QError;
    int count = 0;
    int holds = 0;
    double holds_frequency = 0.0;
    double min_slack = 0.0;
};

SweepSummary summarize(Theorem theorem, const std::vector<BoundReport>& reports);

}  // namespace hipbmdp
