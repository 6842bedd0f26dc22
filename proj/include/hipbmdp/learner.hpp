#pragma once

#include "hipbmdp/family.hpp"
#include "hipbmdp/mdp.hpp"
#include "hipbmdp/transport.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace hipbmdp {

/// Learnable environment-id -> hidden-parameter table.
class TaskEmbeddingTable {
public:
    explicit TaskEmbeddingTable(int dim = 1);

    int dim() const { return dim_; }
    bool contains(int env_id) const { return thetas_.count(env_id) != 0; }
    /// Throws ValidationError for an unknown id.
    const Eigen::VectorXd& at(int env_id) const;
    Eigen::VectorXd& at(int env_id);
    void set(int env_id, Eigen::VectorXd theta);
    std::vector<int> env_ids() const;
    const std::map<int, Eigen::VectorXd>& entries() const { return thetas_; }

    /// Arithmetic mean over `env_ids` (the zero-shot guess for an unseen environment).
    Eigen::VectorXd mean_of(const std::vector<int>& env_ids) const;

    friend bool operator==(const TaskEmbeddingTable&, const TaskEmbeddingTable&) = default;

private:
    int dim_;
    std::map<int, Eigen::VectorXd> thetas_;
};

/// out = W_s feat + W_a onehot(a) + W_theta theta + b.
struct AffineHead {
    Eigen::MatrixXd w_state;   // out x feature_dim
    Eigen::MatrixXd w_action;  // out x n_actions
    Eigen::MatrixXd w_theta;   // out x theta_dim
    Eigen::VectorXd bias;      // out

    static AffineHead zeros(int out_dim, int feature_dim, int n_actions, int theta_dim);

    Eigen::VectorXd apply(const Eigen::VectorXd& features, int action, const Eigen::VectorXd& theta) const;

    /// this += scale * other (shapes must agree).
    void add_scaled(const AffineHead& other, double scale);
    /// All parameters flattened in the order w_state, w_action, w_theta, bias (column-major).
    Eigen::VectorXd flatten() const;
    void assign(const Eigen::VectorXd& flat);
    Eigen::Index size() const;
    bool all_finite() const;

    friend bool operator==(const AffineHead& a, const AffineHead& b);
};

constexpr double kMinVariance = 1e-6;
constexpr double kMaxVariance = 1e6;

/// Universal Gaussian next-state model conditioned on theta, over fixed state features.
struct LatentDynamicsModel {
    /// feature_dim x n_states; column s is feat(s).
    Eigen::MatrixXd state_features;
    int n_actions = 0;
    int theta_dim = 0;
    AffineHead mean;
    AffineHead logvar;

    LatentDynamicsModel(Eigen::MatrixXd features, int n_actions, int theta_dim);
    /// One-hot state features, all weights zero.
    static LatentDynamicsModel one_hot(int n_states, int n_actions, int theta_dim);

    int n_states() const { return static_cast<int>(state_features.cols()); }
    int feature_dim() const { return static_cast<int>(state_features.rows()); }
    Eigen::VectorXd features(int state) const { return state_features.col(state); }

    /// Gaussian prediction given an arbitrary latent feature input.
    DiagonalGaussian predict(const Eigen::VectorXd& features, int action, const Eigen::VectorXd& theta) const;

    friend bool operator==(const LatentDynamicsModel& a, const LatentDynamicsModel& b);
};

/// mean = W_s feat(s) + W_a onehot(a) + W_theta theta + b; variance = exp(logvar head)
/// clamped to [kMinVariance, kMaxVariance].
DiagonalGaussian forward(const LatentDynamicsModel& model, int state, int action, const Eigen::VectorXd& theta);

struct Transition {
    int state = 0;
    int action = 0;
    int next_state = 0;

    friend bool operator==(const Transition&, const Transition&) = default;
};

struct TransitionBatch {
    int env_id = 0;
    std::vector<Transition> samples;

    int size() const { return static_cast<int>(samples.size()); }
    /// Nonempty, indices in range.
    void validate(int n_states, int n_actions) const;
};

/// How the two Gaussians inside one squared Theta-term residual are formed.
enum class ThetaPairing {
    /// Sample k of batch_i and sample k of batch_j, each at its own (s, a).
    Positional,
    /// Both Gaussians at sample k's (s, a) of batch_i, conditioned on psi(I1) and psi(I2).
    SharedInput,
};

struct LossOptions {
    ThetaPairing pairing = ThetaPairing::SharedInput;
    /// Model terms also move psi through the theta input of the dynamics model.
    bool psi_receives_model_gradient = true;
};

struct LossBreakdown {
    double theta_term = 0.0;
    double model_term_i = 0.0;
    double model_term_j = 0.0;
    double total = 0.0;
    double alpha_psi = 1.0;
};

/// Per-sample W2 targets of the Theta term. These are constants of the loss (gradient stopped).
std::vector<double> theta_term_targets(const TransitionBatch& batch_i, const TransitionBatch& batch_j,
                                       const TaskEmbeddingTable& psi, const LatentDynamicsModel& model,
                                       const LossOptions& options = {});

/// Mean over the batch of the squared L2 gap between predicted mean and feat(s'),
/// divided by the feature dimension.
double model_term(const LatentDynamicsModel& model, const TransitionBatch& batch, const Eigen::VectorXd& theta);

/// total = alpha_psi * theta_term + model_term_i + model_term_j.
/// Throws ValidationError on equal env ids or unequal batch sizes.
LossBreakdown loss(const TransitionBatch& batch_i, const TransitionBatch& batch_j, const TaskEmbeddingTable& psi,
                   const LatentDynamicsModel& model, double alpha_psi, const LossOptions& options = {});

struct ParameterGradients {
    LossBreakdown loss;
    /// Gradient for psi(I1) and psi(I2) only.
    std::map<int, Eigen::VectorXd> psi;
    AffineHead mean;
    /// Always zero: no loss term depends on the variance head except through a stopped W2.
    AffineHead logvar;
};

ParameterGradients gradients(const TransitionBatch& batch_i, const TransitionBatch& batch_j,
                             const TaskEmbeddingTable& psi, const LatentDynamicsModel& model, double alpha_psi,
                             const LossOptions& options = {});

/// d model_term / d theta.
Eigen::VectorXd model_term_theta_gradient(const LatentDynamicsModel& model, const TransitionBatch& batch,
                                          const Eigen::VectorXd& theta);

struct TrainConfig {
    int steps = 1000;
    int batch_size = 64;
    /// alpha_1: psi step size.
    double lr_psi = 0.02;
    /// alpha_2: model step size.
    double lr_model = 0.5;
    double alpha_psi = 0.1;
    int embedding_dim = 1;
    /// psi entries start at init_scale * N(0, 1).
    double init_scale = 0.5;
    LossOptions loss;
    std::uint64_t seed = 0;

    friend bool operator==(const TrainConfig& a, const TrainConfig& b);
};

struct TrainLogEntry {
    int step = 0;
    int env_i = 0;
    int env_j = 0;
    LossBreakdown loss;
};

struct TrainResult {
    TaskEmbeddingTable psi;
    LatentDynamicsModel model;
    std::vector<TrainLogEntry> log;
};

/// Replay buffer per environment id (family member index).
using ReplayBuffers = std::map<int, std::vector<Transition>>;

/// Independent uniform (s, a) draws with s' ~ T(.|s, a).
std::vector<Transition> collect_uniform(const TabularMDP& mdp, int n, std::uint64_t seed);

/// Transitions from `episodes` rollouts of `policy` of length `horizon` from uniform start states.
std::vector<Transition> collect_trajectories(const TabularMDP& mdp, const Policy& policy, int episodes, int horizon,
                                             std::uint64_t seed);

/// Each step visits every training environment i and pairs it with every other training
/// environment j: both batches are drawn from the replay buffers, then psi moves by lr_psi and
/// the model by lr_model along the gradient of the loss. Throws NumericalError on a
/// non-finite loss. Deterministic given the config seed.
TrainResult train(const HiPFamily& family, const ReplayBuffers& buffers, const TrainConfig& config);

/// Per-step error of the k-step open-loop unroll: the policy acts on the true state, the model's
/// predicted mean is fed back as the next latent input, and entry t - 1 is the mean over episodes
/// of ||predicted mean - feat(s_t)||_2.
Eigen::VectorXd rollout_error(const LatentDynamicsModel& model, const Eigen::VectorXd& theta,
                              const TabularMDP& mdp, const Policy& policy, int k, int n_episodes,
                              std::uint64_t seed);

struct RolloutProbe {
    TabularMDP mdp;
    Policy policy;
    int k = 5;
    int n_episodes = 200;
    std::uint64_t seed = 0;
};

struct AdaptResult {
    Eigen::VectorXd theta_hat;
    /// model_term at initialization followed by one entry per update.
    std::vector<double> model_error;
    /// Mean per-step rollout error at initialization followed by one entry per update;
    /// empty without a probe. Every entry uses the probe seed (common random numbers).
    std::vector<double> rollout_error;
};

/// Gradient descent on model_term with respect to theta only; the model is untouched.
AdaptResult adapt_theta(const LatentDynamicsModel& model, const TransitionBatch& batch,
                        const Eigen::VectorXd& initial_theta, int steps, double lr,
                        const std::optional<RolloutProbe>& probe = std::nullopt);

}  // namespace hipbmdp
