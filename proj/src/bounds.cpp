#include "hipbmdp/bounds.hpp"

#include "hipbmdp/error.hpp"
#include "hipbmdp/seed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

namespace hipbmdp {

std::string to_string(Theorem theorem) {
    switch (theorem) {
        case Theorem::QError: return "q_error";
        case Theorem::Transfer: return "transfer";
        case Theorem::SampleComplexity: return "sample_complexity";
        case Theorem::SingleTaskBisim: return "single_task_bisim";
        case Theorem::ValueDifference: return "value_difference";
        case Theorem::OptValueDifference: return "opt_value_difference";
        case Theorem::AvgApproxError: return "avg_approx_error";
    }
    return "unknown";
}

const std::vector<Theorem>& all_theorems() {
    static const std::vector<Theorem> all{Theorem::QError,          Theorem::Transfer,
                                          Theorem::SampleComplexity, Theorem::SingleTaskBisim,
                                          Theorem::ValueDifference,  Theorem::OptValueDifference,
                                          Theorem::AvgApproxError};
    return all;
}

Theorem theorem_from_string(const std::string& name) {
    for (Theorem t : all_theorems())
        if (to_string(t) == name) return t;
    throw ValidationError("unknown theorem id '" + name + "'");
}

bool is_deterministic(Theorem theorem) { return theorem != Theorem::SampleComplexity; }

std::string to_string(ThetaGap gap) { return gap == ThetaGap::TaskMetric ? "task_metric" : "parameter_l1"; }

ThetaGap theta_gap_from_string(const std::string& name) {
    if (name == "task_metric") return ThetaGap::TaskMetric;
    if (name == "parameter_l1") return ThetaGap::Parameter;
    throw ValidationError("unknown theta gap '" + name + "'");
}

BoundReport make_report(Theorem theorem, double lhs, double rhs, double planner_slack,
                        std::map<std::string, double> terms, Provenance inputs) {
    if (!std::isfinite(lhs) || !std::isfinite(rhs)) throw NumericalError("bound report: non-finite LHS or RHS");
    BoundReport r;
    r.theorem = theorem;
    r.lhs = lhs;
    r.rhs = rhs;
    r.slack = rhs - lhs;
    r.tolerance = 1e-6 * std::max(1.0, std::abs(rhs)) + planner_slack;
    r.holds = r.slack >= -r.tolerance;
    r.terms = std::move(terms);
    r.inputs = std::move(inputs);
    return r;
}

ObservedFamily::ObservedFamily(HiPFamily family, BlockEmission emission, std::uint64_t lift_seed,
                               std::uint64_t family_seed)
    : family_(std::move(family)), emission_(std::move(emission)), lift_seed_(lift_seed), family_seed_(family_seed) {
    emission_.validate();
    require(emission_.n_states() == family_.n_states(), "ObservedFamily: emission state count differs from family");
}

ObservationMDP ObservedFamily::observe(const Eigen::VectorXd& theta) const {
    return lift_to_observations(instantiate(family_, theta), emission_, lift_seed_);
}

StateAbstraction ObservedFamily::ground_truth_abstraction() const {
    return StateAbstraction(observe_member(0).latent_of);
}

double theta_gap(const HiPFamily& family, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                 const VerifyOptions& options) {
    if (options.theta_gap == ThetaGap::Parameter) return (a - b).lpNorm<1>();
    const TabularMDP ma = instantiate(family, a);
    const TabularMDP mb = instantiate(family, b);
    return theta_distance(ma, mb, make_ground_metric(options.ground_metric, ma, options.bisim_tol), false).value;
}

namespace {

double sup_gap(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).cwiseAbs().maxCoeff(); }
double sup_gap(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

double planner_slack(double gamma, double tol) { return 2.0 * tol / (1.0 - gamma); }

std::vector<double> to_std(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Provenance provenance(const VerifyOptions& options, std::uint64_t family_seed) {
    Provenance p;
    p.family_seed = family_seed;
    p.ground_metric = to_string(options.ground_metric);
    p.theta_gap = to_string(options.theta_gap);
    return p;
}

/// Abstract-model Q* error on `target` for the model built on `source`, plus the
/// policy-evaluation analogue: the greedy policy of the lifted abstract Q evaluated on target.
std::pair<double, double> abstract_model_errors(const TabularMDP& target, const TabularMDP& source,
                                                const StateAbstraction& phi, double tol) {
    const TabularMDP abstract = build_abstract_mdp(source, phi);
    const Eigen::MatrixXd lifted = lift_q(value_iteration(abstract, tol).q_values, phi);
    const Eigen::MatrixXd q_star = value_iteration(target, tol).q_values;
    const Eigen::MatrixXd q_pi = policy_evaluation(target, greedy_policy(lifted), tol).q_values;
    return {sup_gap(q_star, lifted), sup_gap(q_star, q_pi)};
}

}  // namespace

BoundReport verify_q_error(const ObservedFamily& family, int env, const StateAbstraction& phi,
                           const Eigen::VectorXd& theta_hat, const VerifyOptions& options) {
    const HiPFamily& f = family.family();
    require(env >= 0 && env < f.n_members(), "verify_q_error: unknown environment");
    const ObservationMDP obs = family.observe_member(env);
    const ObservationMDP obs_hat = family.observe(theta_hat);
    require(phi.n_observations() == obs.mdp.n_states(), "verify_q_error: abstraction is not total on observations");

    const auto [lhs, policy_lhs] = abstract_model_errors(obs.mdp, obs_hat.mdp, phi, options.planner_tol);
    const AbstractionErrors e = abstraction_errors(obs.mdp, phi, theta_hat, f.theta(env));
    const double eps_theta = theta_gap(f, theta_hat, f.theta(env), options);
    const double g = f.gamma();
    const double R = f.r_max();
    const double rhs = e.eps_R + g * (e.eps_T + eps_theta) * R / (2.0 * (1.0 - g));

    std::map<std::string, double> terms{
        {"eps_R", e.eps_R},
        {"eps_T", e.eps_T},
        {"eps_theta", eps_theta},
        {"eps_theta_parameter_l1", e.eps_theta},
        {"eps_T_cross", cross_task_eps_T(obs.mdp, obs_hat.mdp, phi)},
        {"gamma", g},
        {"r_max", R},
        {"n_abstract", phi.n_abstract()},
        {"policy_lhs", policy_lhs},
        {"reference_rhs", e.eps_R / (1.0 - g) + g * (e.eps_T + eps_theta) * R / (2.0 * (1.0 - g) * (1.0 - g))},
    };
    Provenance p = provenance(options, family.family_seed());
    p.envs = {f.labels()[static_cast<std::size_t>(env)]};
    p.phi = phi.map();
    p.thetas = {to_std(f.theta(env)), to_std(theta_hat)};
    return make_report(Theorem::QError, lhs, rhs, planner_slack(g, options.planner_tol), std::move(terms),
                       std::move(p));
}

BoundReport verify_transfer(const ObservedFamily& family, int i, int j, const StateAbstraction& phi,
                            const Eigen::VectorXd& theta_hat_i, const VerifyOptions& options) {
    const HiPFamily& f = family.family();
    require(i >= 0 && i < f.n_members() && j >= 0 && j < f.n_members(), "verify_transfer: unknown environment");
    const ObservationMDP obs_i = family.observe_member(i);
    const ObservationMDP obs_j = family.observe_member(j);
    const ObservationMDP obs_hat = family.observe(theta_hat_i);
    require(phi.n_observations() == obs_i.mdp.n_states(), "verify_transfer: abstraction is not total on observations");

    const auto [lhs, policy_lhs] = abstract_model_errors(obs_j.mdp, obs_hat.mdp, phi, options.planner_tol);
    const AbstractionErrors e = abstraction_errors(obs_i.mdp, phi, theta_hat_i, f.theta(i));
    const double eps_theta = theta_gap(f, theta_hat_i, f.theta(i), options);
    const double task_gap = i == j ? 0.0 : theta_gap(f, f.theta(i), f.theta(j), options);
    const double g = f.gamma();
    const double R = f.r_max();
    const double rhs = e.eps_R + g * (e.eps_T + eps_theta + task_gap) * R / (2.0 * (1.0 - g));

    std::map<std::string, double> terms{
        {"eps_R", e.eps_R},
        {"eps_T", e.eps_T},
        {"eps_theta", eps_theta},
        {"eps_theta_parameter_l1", e.eps_theta},
        {"task_gap", task_gap},
        {"task_gap_parameter_l1", (f.theta(i) - f.theta(j)).lpNorm<1>()},
        {"eps_T_cross", cross_task_eps_T(obs_i.mdp, obs_j.mdp, phi)},
        {"gamma", g},
        {"r_max", R},
        {"n_abstract", phi.n_abstract()},
        {"policy_lhs", policy_lhs},
        {"reference_rhs",
         e.eps_R / (1.0 - g) + g * (e.eps_T + eps_theta + task_gap) * R / (2.0 * (1.0 - g) * (1.0 - g))},
    };
    Provenance p = provenance(options, family.family_seed());
    p.envs = {f.labels()[static_cast<std::size_t>(i)], f.labels()[static_cast<std::size_t>(j)]};
    p.phi = phi.map();
    p.thetas = {to_std(f.theta(i)), to_std(f.theta(j)), to_std(theta_hat_i)};
    return make_report(Theorem::Transfer, lhs, rhs, planner_slack(g, options.planner_tol), std::move(terms),
                       std::move(p));
}

BoundReport verify_single_task_bisim(const TabularMDP& obs_mdp, const StateAbstraction& phi,
                                     const VerifyOptions& options) {
    require(phi.n_observations() == obs_mdp.n_states(), "verify_single_task_bisim: abstraction is not total");
    const auto [lhs, policy_lhs] = abstract_model_errors(obs_mdp, obs_mdp, phi, options.planner_tol);
    const Eigen::VectorXd none = Eigen::VectorXd::Zero(1);
    const AbstractionErrors e = abstraction_errors(obs_mdp, phi, none, none);
    const double g = obs_mdp.gamma();
    const double R = obs_mdp.r_max();
    const double rhs = e.eps_R + g * e.eps_T * R / (2.0 * (1.0 - g));
    std::map<std::string, double> terms{
        {"eps_R", e.eps_R},
        {"eps_T", e.eps_T},
        {"gamma", g},
        {"r_max", R},
        {"n_abstract", phi.n_abstract()},
        {"policy_lhs", policy_lhs},
        {"reference_rhs", e.eps_R / (1.0 - g) + g * e.eps_T * R / (2.0 * (1.0 - g) * (1.0 - g))},
    };
    Provenance p = provenance(options, 0);
    p.phi = phi.map();
    return make_report(Theorem::SingleTaskBisim, lhs, rhs, planner_slack(g, options.planner_tol), std::move(terms),
                       std::move(p));
}

namespace {

struct MemberPair {
    TabularMDP mi;
    TabularMDP mj;
    double distance;
};

MemberPair member_pair(const HiPFamily& f, int i, int j, const VerifyOptions& options) {
    require(i >= 0 && i < f.n_members() && j >= 0 && j < f.n_members(), "unknown family member");
    TabularMDP mi = f.member(i);
    TabularMDP mj = f.member(j);
    const double d = theta_distance(mi, mj, make_ground_metric(options.ground_metric, mi, options.bisim_tol), false).value;
    return MemberPair{std::move(mi), std::move(mj), d};
}

Provenance pair_provenance(const HiPFamily& f, int i, int j, const VerifyOptions& options) {
    Provenance p = provenance(options, 0);
    p.envs = {f.labels()[static_cast<std::size_t>(i)], f.labels()[static_cast<std::size_t>(j)]};
    p.thetas = {to_std(f.theta(i)), to_std(f.theta(j))};
    return p;
}

}  // namespace

BoundReport verify_value_difference(const HiPFamily& f, int i, int j, const Policy& pi, const VerifyOptions& options) {
    const MemberPair pair = member_pair(f, i, j, options);
    require(pi.n_states() == f.n_states() && pi.n_actions() == f.n_actions(),
            "verify_value_difference: policy shape does not match the family");
    const Eigen::VectorXd vi = policy_evaluation(pair.mi, pi, options.planner_tol).values;
    const Eigen::VectorXd vj = policy_evaluation(pair.mj, pi, options.planner_tol).values;
    const double g = f.gamma();
    const double lhs = sup_gap(vi, vj);
    const double rhs = g / (1.0 - g) * pair.distance;
    const double span_i = vi.maxCoeff() - vi.minCoeff();
    std::map<std::string, double> terms{
        {"task_gap", pair.distance},
        {"task_gap_parameter_l1", (f.theta(i) - f.theta(j)).lpNorm<1>()},
        {"gamma", g},
        {"r_max", f.r_max()},
        {"value_span", span_i},
        {"reference_rhs", g / (1.0 - g) * pair.distance * 0.5 * f.r_max() / (1.0 - g)},
    };
    return make_report(Theorem::ValueDifference, lhs, rhs, planner_slack(g, options.planner_tol), std::move(terms),
                       pair_provenance(f, i, j, options));
}

BoundReport verify_opt_value_difference(const HiPFamily& f, int i, int j, const VerifyOptions& options) {
    const MemberPair pair = member_pair(f, i, j, options);
    const Eigen::VectorXd vi = value_iteration(pair.mi, options.planner_tol).values;
    const Eigen::VectorXd vj = value_iteration(pair.mj, options.planner_tol).values;
    const double g = f.gamma();
    const double lhs = sup_gap(vi, vj);
    const double rhs = g / ((1.0 - g) * (1.0 - g)) * pair.distance;
    std::map<std::string, double> terms{
        {"task_gap", pair.distance},
        {"task_gap_parameter_l1", (f.theta(i) - f.theta(j)).lpNorm<1>()},
        {"gamma", g},
        {"r_max", f.r_max()},
    };
    return make_report(Theorem::OptValueDifference, lhs, rhs, planner_slack(g, options.planner_tol), std::move(terms),
                       pair_provenance(f, i, j, options));
}

BoundReport verify_avg_approx_error(const HiPFamily& f, const std::vector<Eigen::VectorXd>& theta_hats,
                                    const VerifyOptions& options) {
    require(static_cast<int>(theta_hats.size()) == f.n_members(), "verify_avg_approx_error: one estimate per member");
    double eps = 0.0;
    double lhs = 0.0;
    Provenance p = provenance(options, 0);
    for (int i = 0; i < f.n_members(); ++i) {
        const TabularMDP truth = f.member(i);
        const TabularMDP estimate = instantiate(f, theta_hats[static_cast<std::size_t>(i)]);
        eps = std::max(eps, theta_distance(estimate, truth,
                                           make_ground_metric(options.ground_metric, estimate, options.bisim_tol), false)
                                .value);
        lhs += sup_gap(value_iteration(estimate, options.planner_tol).values,
                       value_iteration(truth, options.planner_tol).values);
        p.envs.push_back(f.labels()[static_cast<std::size_t>(i)]);
        p.thetas.push_back(to_std(f.theta(i)));
        p.thetas.push_back(to_std(theta_hats[static_cast<std::size_t>(i)]));
    }
    lhs /= f.n_members();
    const double g = f.gamma();
    const double rhs = eps * g / ((1.0 - g) * (1.0 - g));
    std::map<std::string, double> terms{{"epsilon", eps}, {"gamma", g}, {"r_max", f.r_max()},
                                        {"n_members", f.n_members()}};
    return make_report(Theorem::AvgApproxError, lhs, rhs, planner_slack(g, options.planner_tol), std::move(terms),
                       std::move(p));
}

Eigen::MatrixXi ReplayDataset::counts(const StateAbstraction& phi, int n_actions) const {
    require(n_actions > 0, "ReplayDataset: n_actions must be positive");
    Eigen::MatrixXi c = Eigen::MatrixXi::Zero(phi.n_abstract(), n_actions);
    for (const auto& t : samples) {
        require(t.obs >= 0 && t.obs < phi.n_observations() && t.next_obs >= 0 && t.next_obs < phi.n_observations() &&
                    t.action >= 0 && t.action < n_actions,
                "ReplayDataset: sample index out of range");
        ++c(phi(t.obs), t.action);
    }
    return c;
}

int ReplayDataset::n_phi(const StateAbstraction& phi, int n_actions) const {
    return counts(phi, n_actions).minCoeff();
}

void ReplayDataset::append(const ReplayDataset& other) {
    samples.insert(samples.end(), other.samples.begin(), other.samples.end());
}

namespace {

int sample_row(const Eigen::MatrixXd& t, int row, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng);
    double acc = 0.0;
    for (Eigen::Index k = 0; k < t.cols(); ++k) {
        acc += t(row, k);
        if (u < acc) return static_cast<int>(k);
    }
    for (Eigen::Index k = t.cols() - 1; k >= 0; --k)
        if (t(row, k) > 0.0) return static_cast<int>(k);
    return static_cast<int>(t.cols() - 1);
}

ObservedTransition observed_step(const ObservationMDP& obs, int env, int x, int a, std::mt19937_64& rng) {
    return ObservedTransition{x, a, sample_row(obs.mdp.transition(a), x, rng), obs.mdp.reward(x, a), env};
}

}  // namespace

ReplayDataset draw_stratified(const ObservationMDP& obs, int env_id, const StateAbstraction& phi, int per_pair,
                              std::uint64_t seed) {
    require(per_pair > 0, "draw_stratified: per_pair must be positive");
    require(phi.n_observations() == obs.mdp.n_states(), "draw_stratified: abstraction is not total");
    std::mt19937_64 rng(seed);
    ReplayDataset d;
    d.samples.reserve(static_cast<std::size_t>(phi.n_abstract()) * obs.mdp.n_actions() * per_pair);
    for (int z = 0; z < phi.n_abstract(); ++z) {
        const auto& members = phi.members(z);
        std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
        for (int a = 0; a < obs.mdp.n_actions(); ++a)
            for (int k = 0; k < per_pair; ++k) d.samples.push_back(observed_step(obs, env_id, members[pick(rng)], a, rng));
    }
    return d;
}

ReplayDataset draw_uniform(const ObservationMDP& obs, int env_id, int n, std::uint64_t seed) {
    require(n > 0, "draw_uniform: n must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> state(0, obs.mdp.n_states() - 1);
    std::uniform_int_distribution<int> action(0, obs.mdp.n_actions() - 1);
    ReplayDataset d;
    for (int k = 0; k < n; ++k) {
        const int x = state(rng);
        const int a = action(rng);
        d.samples.push_back(observed_step(obs, env_id, x, a, rng));
    }
    return d;
}

ReplayDataset draw_trajectories(const ObservationMDP& obs, int env_id, const Policy& policy, int episodes, int horizon,
                                std::uint64_t seed) {
    require(episodes > 0 && horizon > 0, "draw_trajectories: episodes and horizon must be positive");
    require(policy.n_states() == obs.mdp.n_states() && policy.n_actions() == obs.mdp.n_actions(),
            "draw_trajectories: policy shape does not match the MDP");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> state(0, obs.mdp.n_states() - 1);
    ReplayDataset d;
    for (int e = 0; e < episodes; ++e) {
        int x = state(rng);
        for (int t = 0; t < horizon; ++t) {
            const int a = policy.sample(x, rng);
            d.samples.push_back(observed_step(obs, env_id, x, a, rng));
            x = d.samples.back().next_obs;
        }
    }
    return d;
}

TabularMDP empirical_abstract_mdp(const ReplayDataset& dataset, const StateAbstraction& phi, int n_actions,
                                  double gamma, double r_max) {
    const Eigen::MatrixXi c = dataset.counts(phi, n_actions);
    require(c.minCoeff() > 0, "empirical_abstract_mdp: some abstract state-action pair has no sample");
    const int Z = phi.n_abstract();
    std::vector<Eigen::MatrixXd> transitions(static_cast<std::size_t>(n_actions), Eigen::MatrixXd::Zero(Z, Z));
    Eigen::MatrixXd rewards = Eigen::MatrixXd::Zero(Z, n_actions);
    for (const auto& t : dataset.samples) {
        const int z = phi(t.obs);
        transitions[static_cast<std::size_t>(t.action)](z, phi(t.next_obs)) += 1.0;
        rewards(z, t.action) += t.reward;
    }
    for (int a = 0; a < n_actions; ++a)
        for (int z = 0; z < Z; ++z) {
            transitions[static_cast<std::size_t>(a)].row(z) /= static_cast<double>(c(z, a));
            const double sum = transitions[static_cast<std::size_t>(a)].row(z).sum();
            if (sum != 1.0) transitions[static_cast<std::size_t>(a)].row(z) /= sum;
            rewards(z, a) = std::clamp(rewards(z, a) / c(z, a), 0.0, r_max);
        }
    return TabularMDP(std::move(transitions), std::move(rewards), gamma, r_max);
}

BoundReport verify_sample_complexity(const ObservedFamily& family, int env, const StateAbstraction& phi,
                                     const ReplayDataset& dataset, double delta, const VerifyOptions& options) {
    const HiPFamily& f = family.family();
    require(env >= 0 && env < f.n_members(), "verify_sample_complexity: unknown environment");
    require(delta > 0.0 && delta < 1.0, "verify_sample_complexity: delta must lie in (0, 1)");
    require(!dataset.samples.empty(), "verify_sample_complexity: empty dataset");
    const ObservationMDP obs = family.observe_member(env);
    require(phi.n_observations() == obs.mdp.n_states(), "verify_sample_complexity: abstraction is not total");
    const int A = f.n_actions();
    const int n_phi = dataset.n_phi(phi, A);
    require(n_phi >= 1, "verify_sample_complexity: some abstract state-action pair is never visited");

    const TabularMDP empirical = empirical_abstract_mdp(dataset, phi, A, f.gamma(), f.r_max());
    const Eigen::MatrixXd lifted = lift_q(value_iteration(empirical, options.planner_tol).q_values, phi);
    const double lhs = sup_gap(value_iteration(obs.mdp, options.planner_tol).q_values, lifted);

    std::set<int> envs;
    for (const auto& t : dataset.samples) {
        require(t.env_id >= 0 && t.env_id < f.n_members(), "verify_sample_complexity: sample from unknown environment");
        envs.insert(t.env_id);
    }
    double eps_theta = 0.0;
    double eps_T_cross = 0.0;
    for (int e : envs) {
        if (e == env) continue;
        eps_theta = std::max(eps_theta, theta_gap(f, f.theta(e), f.theta(env), options));
        eps_T_cross = std::max(eps_T_cross, cross_task_eps_T(obs.mdp, family.observe_member(e).mdp, phi));
    }
    const AbstractionErrors e = abstraction_errors(obs.mdp, phi, f.theta(env), f.theta(env));
    const double g = f.gamma();
    const double R = f.r_max();
    const double sampling = R / ((1.0 - g) * (1.0 - g)) *
                            std::sqrt(std::log(2.0 * phi.n_abstract() * A / delta) / (2.0 * n_phi));
    const double rhs = e.eps_R + g * (e.eps_T + eps_theta) * R / (2.0 * (1.0 - g)) + sampling;

    std::map<std::string, double> terms{
        {"eps_R", e.eps_R},
        {"eps_T", e.eps_T},
        {"eps_theta", eps_theta},
        {"eps_T_cross", eps_T_cross},
        {"n_phi", n_phi},
        {"n_abstract", phi.n_abstract()},
        {"n_actions", A},
        {"delta", delta},
        {"sampling_term", sampling},
        {"n_envs", static_cast<double>(envs.size())},
        {"gamma", g},
        {"r_max", R},
    };
    Provenance p = provenance(options, family.family_seed());
    for (int id : envs) p.envs.push_back(f.labels()[static_cast<std::size_t>(id)]);
    p.phi = phi.map();
    p.thetas = {to_std(f.theta(env))};
    p.dataset_size = static_cast<std::int64_t>(dataset.samples.size());
    p.delta = delta;
    return make_report(Theorem::SampleComplexity, lhs, rhs, planner_slack(g, options.planner_tol), std::move(terms),
                       std::move(p));
}

namespace {

template <class T>
const T& pick(const std::vector<T>& xs, std::mt19937_64& rng) {
    require(!xs.empty(), "sweep: empty choice list");
    std::uniform_int_distribution<std::size_t> d(0, xs.size() - 1);
    return xs[d(rng)];
}

int uniform_int(int lo, int hi, std::mt19937_64& rng) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::pair<int, int> distinct_pair(int n, std::mt19937_64& rng) {
    const int i = uniform_int(0, n - 1, rng);
    int j = uniform_int(0, n - 2, rng);
    if (j >= i) ++j;
    return {i, j};
}

Eigen::VectorXd perturb(const Eigen::VectorXd& theta, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd out = theta;
    if (sigma == 0.0) return out;
    for (Eigen::Index k = 0; k < out.size(); ++k) out(k) += sigma * normal(rng);
    return out;
}

/// Bisimulation metric of the observation MDP of theta, lifted from the latent metric
/// (exact for a violation-free emission, where every block is a bisimulation class).
BisimMetric observation_bisim(const ObservedFamily& family, const Eigen::VectorXd& theta, double tol) {
    const BisimMetric latent = bisim_metric(instantiate(family.family(), theta), tol);
    const auto latent_of = family.observe(theta).latent_of;
    const int X = static_cast<int>(latent_of.size());
    BisimMetric out{Eigen::MatrixXd::Zero(X, X), latent.residual, latent.iterations};
    for (int x = 0; x < X; ++x)
        for (int y = 0; y < X; ++y) out.d(x, y) = latent.d(latent_of[x], latent_of[y]);
    return out;
}

Policy random_policy(int S, int A, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < 0.5) {
        std::vector<int> actions(static_cast<std::size_t>(S));
        for (auto& a : actions) a = uniform_int(0, A - 1, rng);
        return Policy::deterministic(std::move(actions), A);
    }
    std::gamma_distribution<double> gamma(1.0, 1.0);
    Eigen::MatrixXd p(S, A);
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) p(s, a) = gamma(rng) + 1e-12;
        p.row(s) /= p.row(s).sum();
        const double sum = p.row(s).sum();
        if (sum != 1.0) p.row(s) /= sum;
    }
    return Policy::stochastic(std::move(p));
}

}  // namespace

std::vector<BoundReport> sweep_deterministic(Theorem theorem, const SweepConfig& cfg) {
    require(is_deterministic(theorem), "sweep_deterministic: " + to_string(theorem) + " is probabilistic");
    require(cfg.instances > 0, "sweep_deterministic: empty sweep");
    require(cfg.max_latent_states >= 2 && cfg.max_actions >= 1 && cfg.obs_per_state >= 1 && cfg.n_members >= 3,
            "sweep_deterministic: invalid instance bounds");
    const bool observed = theorem == Theorem::QError || theorem == Theorem::Transfer ||
                          theorem == Theorem::SingleTaskBisim;
    const int max_states = observed ? cfg.max_latent_states : cfg.max_latent_states * cfg.obs_per_state;

    std::vector<BoundReport> reports;
    reports.reserve(static_cast<std::size_t>(cfg.instances));
    for (int k = 0; k < cfg.instances; ++k) {
        std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(k)));
        FamilySpec spec;
        spec.n_states = uniform_int(2, max_states, rng);
        spec.n_actions = uniform_int(1, cfg.max_actions, rng);
        spec.theta_dim = uniform_int(1, 2, rng);
        spec.n_members = cfg.n_members;
        spec.perturbation_scale = pick(cfg.perturbation_scales, rng);
        spec.gamma = cfg.gamma;
        spec.r_max = cfg.r_max;
        const std::uint64_t family_seed = rng();
        const std::uint64_t lift_seed = rng();
        HiPFamily f = sample_family(spec, family_seed);
        const double sigma = pick(cfg.theta_noise, rng) * spec.perturbation_scale;
        const double eps = pick(cfg.epsilons, rng);

        BoundReport r;
        switch (theorem) {
            case Theorem::QError: {
                ObservedFamily of(std::move(f), BlockEmission::uniform(spec.n_states, cfg.obs_per_state), lift_seed,
                                  family_seed);
                const int env = uniform_int(0, spec.n_members - 1, rng);
                const auto phi =
                    abstraction_from_metric(observation_bisim(of, of.family().theta(env), cfg.options.bisim_tol), eps);
                r = verify_q_error(of, env, phi, perturb(of.family().theta(env), sigma, rng), cfg.options);
                break;
            }
            case Theorem::Transfer: {
                ObservedFamily of(std::move(f), BlockEmission::uniform(spec.n_states, cfg.obs_per_state), lift_seed,
                                  family_seed);
                const auto [i, j] = distinct_pair(spec.n_members, rng);
                const auto phi =
                    abstraction_from_metric(observation_bisim(of, of.family().theta(i), cfg.options.bisim_tol), eps);
                r = verify_transfer(of, i, j, phi, perturb(of.family().theta(i), sigma, rng), cfg.options);
                break;
            }
            case Theorem::SingleTaskBisim: {
                ObservedFamily of(std::move(f), BlockEmission::uniform(spec.n_states, cfg.obs_per_state), lift_seed,
                                  family_seed);
                const int env = uniform_int(0, spec.n_members - 1, rng);
                const auto phi =
                    abstraction_from_metric(observation_bisim(of, of.family().theta(env), cfg.options.bisim_tol), eps);
                r = verify_single_task_bisim(of.observe_member(env).mdp, phi, cfg.options);
                break;
            }
            case Theorem::ValueDifference: {
                const auto [i, j] = distinct_pair(spec.n_members, rng);
                r = verify_value_difference(f, i, j, random_policy(spec.n_states, spec.n_actions, rng), cfg.options);
                break;
            }
            case Theorem::OptValueDifference: {
                const auto [i, j] = distinct_pair(spec.n_members, rng);
                r = verify_opt_value_difference(f, i, j, cfg.options);
                break;
            }
            case Theorem::AvgApproxError: {
                std::vector<Eigen::VectorXd> hats;
                for (int m = 0; m < spec.n_members; ++m) hats.push_back(perturb(f.theta(m), sigma, rng));
                r = verify_avg_approx_error(f, hats, cfg.options);
                break;
            }
            case Theorem::SampleComplexity: break;
        }
        r.inputs.family_seed = family_seed;
        r.terms["epsilon_cluster"] = eps;
        r.terms["theta_noise"] = sigma;
        r.terms["n_states"] = spec.n_states;
        reports.push_back(std::move(r));
    }
    return reports;
}

std::vector<BoundReport> sweep_sample_complexity(const SampleSweepConfig& cfg) {
    require(cfg.datasets > 0, "sweep_sample_complexity: empty sweep");
    require(cfg.per_pair > 0, "sweep_sample_complexity: per_pair must be positive");
    const std::uint64_t family_seed = mix_seed(cfg.seed, 0);
    ObservedFamily of(sample_family(cfg.family, family_seed),
                      BlockEmission::uniform(cfg.family.n_states, cfg.obs_per_state), mix_seed(cfg.seed, 1), family_seed);
    const int env = of.family().index_of(of.family().split().train.front());
    const StateAbstraction phi = of.ground_truth_abstraction();
    const ObservationMDP obs = of.observe_member(env);
    std::vector<BoundReport> reports;
    reports.reserve(static_cast<std::size_t>(cfg.datasets));
    for (int k = 0; k < cfg.datasets; ++k) {
        const ReplayDataset d =
            draw_stratified(obs, env, phi, cfg.per_pair, mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(k)));
        reports.push_back(verify_sample_complexity(of, env, phi, d, cfg.delta, cfg.options));
    }
    return reports;
}

SweepSummary summarize(Theorem theorem, const std::vector<BoundReport>& reports) {
    SweepSummary s;
    s.theorem = theorem;
    s.count = static_cast<int>(reports.size());
    s.min_slack = reports.empty() ? 0.0 : std::numeric_limits<double>::infinity();
    for (const auto& r : reports) {
        s.holds += r.holds ? 1 : 0;
        s.min_slack = std::min(s.min_slack, r.slack);
    }
    s.holds_frequency = s.count > 0 ? static_cast<double>(s.holds) / s.count : 0.0;
    return s;
}

}  // namespace hipbmdp
