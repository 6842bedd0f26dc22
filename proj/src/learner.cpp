#include "hipbmdp/learner.hpp"

#include "hipbmdp/error.hpp"
#include "hipbmdp/seed.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace hipbmdp {

TaskEmbeddingTable::TaskEmbeddingTable(int dim) : dim_(dim) {
    require(dim > 0, "TaskEmbeddingTable: dimension must be positive");
}

const Eigen::VectorXd& TaskEmbeddingTable::at(int env_id) const {
    const auto it = thetas_.find(env_id);
    require(it != thetas_.end(), "TaskEmbeddingTable: unknown environment id " + std::to_string(env_id));
    return it->second;
}

Eigen::VectorXd& TaskEmbeddingTable::at(int env_id) {
    const auto it = thetas_.find(env_id);
    require(it != thetas_.end(), "TaskEmbeddingTable: unknown environment id " + std::to_string(env_id));
    return it->second;
}

void TaskEmbeddingTable::set(int env_id, Eigen::VectorXd theta) {
    require(theta.size() == dim_, "TaskEmbeddingTable: embedding dimension mismatch");
    require(theta.allFinite(), "TaskEmbeddingTable: embeddings must be finite");
    thetas_[env_id] = std::move(theta);
}

std::vector<int> TaskEmbeddingTable::env_ids() const {
    std::vector<int> ids;
    for (const auto& [id, _] : thetas_) ids.push_back(id);
    return ids;
}

Eigen::VectorXd TaskEmbeddingTable::mean_of(const std::vector<int>& env_ids) const {
    require(!env_ids.empty(), "TaskEmbeddingTable: mean over no environments");
    Eigen::VectorXd m = Eigen::VectorXd::Zero(dim_);
    for (int id : env_ids) m += at(id);
    return m / static_cast<double>(env_ids.size());
}

AffineHead AffineHead::zeros(int out_dim, int feature_dim, int n_actions, int theta_dim) {
    return AffineHead{Eigen::MatrixXd::Zero(out_dim, feature_dim), Eigen::MatrixXd::Zero(out_dim, n_actions),
                      Eigen::MatrixXd::Zero(out_dim, theta_dim), Eigen::VectorXd::Zero(out_dim)};
}

Eigen::VectorXd AffineHead::apply(const Eigen::VectorXd& features, int action, const Eigen::VectorXd& theta) const {
    return w_state * features + w_action.col(action) + w_theta * theta + bias;
}

void AffineHead::add_scaled(const AffineHead& o, double scale) {
    w_state += scale * o.w_state;
    w_action += scale * o.w_action;
    w_theta += scale * o.w_theta;
    bias += scale * o.bias;
}

Eigen::Index AffineHead::size() const { return w_state.size() + w_action.size() + w_theta.size() + bias.size(); }

Eigen::VectorXd AffineHead::flatten() const {
    Eigen::VectorXd flat(size());
    flat << w_state.reshaped(), w_action.reshaped(), w_theta.reshaped(), bias;
    return flat;
}

void AffineHead::assign(const Eigen::VectorXd& flat) {
    require(flat.size() == size(), "AffineHead: flat parameter size mismatch");
    Eigen::Index k = 0;
    for (Eigen::MatrixXd* m : {&w_state, &w_action, &w_theta}) {
        m->reshaped() = flat.segment(k, m->size());
        k += m->size();
    }
    bias = flat.segment(k, bias.size());
}

bool AffineHead::all_finite() const {
    return w_state.allFinite() && w_action.allFinite() && w_theta.allFinite() && bias.allFinite();
}

bool operator==(const AffineHead& a, const AffineHead& b) {
    auto same = [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
        return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
    };
    return same(a.w_state, b.w_state) && same(a.w_action, b.w_action) && same(a.w_theta, b.w_theta) &&
           same(a.bias, b.bias);
}

LatentDynamicsModel::LatentDynamicsModel(Eigen::MatrixXd features, int actions, int dim)
    : state_features(std::move(features)), n_actions(actions), theta_dim(dim) {
    require(state_features.rows() > 0 && state_features.cols() > 0, "LatentDynamicsModel: empty state features");
    require(state_features.allFinite(), "LatentDynamicsModel: state features must be finite");
    require(n_actions > 0 && theta_dim > 0, "LatentDynamicsModel: sizes must be positive");
    const int D = feature_dim();
    mean = AffineHead::zeros(D, D, n_actions, theta_dim);
    logvar = AffineHead::zeros(D, D, n_actions, theta_dim);
}

LatentDynamicsModel LatentDynamicsModel::one_hot(int n_states, int n_actions, int theta_dim) {
    require(n_states > 0, "LatentDynamicsModel: n_states must be positive");
    return LatentDynamicsModel(Eigen::MatrixXd::Identity(n_states, n_states), n_actions, theta_dim);
}

DiagonalGaussian LatentDynamicsModel::predict(const Eigen::VectorXd& features, int action,
                                              const Eigen::VectorXd& theta) const {
    require(features.size() == feature_dim(), "forward: feature dimension mismatch");
    require(action >= 0 && action < n_actions, "forward: action out of range");
    require(theta.size() == theta_dim, "forward: theta dimension mismatch");
    Eigen::VectorXd m = mean.apply(features, action, theta);
    Eigen::VectorXd v = logvar.apply(features, action, theta).array().exp().max(kMinVariance).min(kMaxVariance).matrix();
    return DiagonalGaussian(std::move(m), std::move(v));
}

bool operator==(const LatentDynamicsModel& a, const LatentDynamicsModel& b) {
    return a.n_actions == b.n_actions && a.theta_dim == b.theta_dim &&
           a.state_features.rows() == b.state_features.rows() && a.state_features.cols() == b.state_features.cols() &&
           a.state_features == b.state_features && a.mean == b.mean && a.logvar == b.logvar;
}

DiagonalGaussian forward(const LatentDynamicsModel& model, int state, int action, const Eigen::VectorXd& theta) {
    require(state >= 0 && state < model.n_states(), "forward: state out of range");
    return model.predict(model.features(state), action, theta);
}

void TransitionBatch::validate(int n_states, int n_actions) const {
    require(!samples.empty(), "TransitionBatch: empty batch");
    for (const auto& t : samples)
        require(t.state >= 0 && t.state < n_states && t.next_state >= 0 && t.next_state < n_states && t.action >= 0 &&
                    t.action < n_actions,
                "TransitionBatch: index out of range");
}

namespace {

void check_pair(const TransitionBatch& bi, const TransitionBatch& bj, const TaskEmbeddingTable& psi,
                const LatentDynamicsModel& model) {
    require(bi.env_id != bj.env_id, "loss: batches must come from different environments");
    require(bi.size() == bj.size(), "loss: batches must have equal sizes");
    bi.validate(model.n_states(), model.n_actions);
    bj.validate(model.n_states(), model.n_actions);
    require(psi.dim() == model.theta_dim, "loss: embedding and model theta dimensions differ");
}

/// Mean-head residuals mu - feat(s') for every sample.
Eigen::MatrixXd residuals(const LatentDynamicsModel& model, const TransitionBatch& batch, const Eigen::VectorXd& theta) {
    Eigen::MatrixXd r(model.feature_dim(), batch.size());
    for (int k = 0; k < batch.size(); ++k) {
        const auto& t = batch.samples[static_cast<std::size_t>(k)];
        r.col(k) = model.mean.apply(model.features(t.state), t.action, theta) - model.features(t.next_state);
    }
    return r;
}

double model_term_from(const Eigen::MatrixXd& r) { return r.squaredNorm() / static_cast<double>(r.size()); }

double theta_term_from(double norm, const std::vector<double>& targets) {
    double sum = 0.0;
    for (double w : targets) sum += (norm - w) * (norm - w);
    return sum / static_cast<double>(targets.size());
}

/// Accumulates d model_term / d (mean head) for one batch.
void accumulate_head_gradient(AffineHead& g, const LatentDynamicsModel& model, const TransitionBatch& batch,
                              const Eigen::MatrixXd& r, const Eigen::VectorXd& theta) {
    const double scale = 2.0 / static_cast<double>(r.size());
    for (int k = 0; k < batch.size(); ++k) {
        const auto& t = batch.samples[static_cast<std::size_t>(k)];
        const Eigen::VectorXd rk = scale * r.col(k);
        g.w_state += rk * model.features(t.state).transpose();
        g.w_action.col(t.action) += rk;
        g.w_theta += rk * theta.transpose();
        g.bias += rk;
    }
}

}  // namespace

std::vector<double> theta_term_targets(const TransitionBatch& bi, const TransitionBatch& bj,
                                       const TaskEmbeddingTable& psi, const LatentDynamicsModel& model,
                                       const LossOptions& options) {
    check_pair(bi, bj, psi, model);
    const Eigen::VectorXd& ti = psi.at(bi.env_id);
    const Eigen::VectorXd& tj = psi.at(bj.env_id);
    std::vector<double> targets(static_cast<std::size_t>(bi.size()));
    for (int k = 0; k < bi.size(); ++k) {
        const auto& si = bi.samples[static_cast<std::size_t>(k)];
        const auto& sj = options.pairing == ThetaPairing::Positional ? bj.samples[static_cast<std::size_t>(k)] : si;
        targets[static_cast<std::size_t>(k)] =
            wasserstein2_gaussian(forward(model, si.state, si.action, ti), forward(model, sj.state, sj.action, tj));
    }
    return targets;
}

double model_term(const LatentDynamicsModel& model, const TransitionBatch& batch, const Eigen::VectorXd& theta) {
    batch.validate(model.n_states(), model.n_actions);
    require(theta.size() == model.theta_dim, "model_term: theta dimension mismatch");
    return model_term_from(residuals(model, batch, theta));
}

LossBreakdown loss(const TransitionBatch& bi, const TransitionBatch& bj, const TaskEmbeddingTable& psi,
                   const LatentDynamicsModel& model, double alpha_psi, const LossOptions& options) {
    require(std::isfinite(alpha_psi) && alpha_psi >= 0.0, "loss: alpha_psi must be nonnegative");
    const auto targets = theta_term_targets(bi, bj, psi, model, options);
    const Eigen::VectorXd& ti = psi.at(bi.env_id);
    const Eigen::VectorXd& tj = psi.at(bj.env_id);
    LossBreakdown out;
    out.alpha_psi = alpha_psi;
    out.theta_term = theta_term_from((ti - tj).norm(), targets);
    out.model_term_i = model_term_from(residuals(model, bi, ti));
    out.model_term_j = model_term_from(residuals(model, bj, tj));
    out.total = alpha_psi * out.theta_term + out.model_term_i + out.model_term_j;
    return out;
}

ParameterGradients gradients(const TransitionBatch& bi, const TransitionBatch& bj, const TaskEmbeddingTable& psi,
                             const LatentDynamicsModel& model, double alpha_psi, const LossOptions& options) {
    require(std::isfinite(alpha_psi) && alpha_psi >= 0.0, "gradients: alpha_psi must be nonnegative");
    const auto targets = theta_term_targets(bi, bj, psi, model, options);
    const Eigen::VectorXd& ti = psi.at(bi.env_id);
    const Eigen::VectorXd& tj = psi.at(bj.env_id);
    const Eigen::MatrixXd ri = residuals(model, bi, ti);
    const Eigen::MatrixXd rj = residuals(model, bj, tj);

    ParameterGradients g;
    const Eigen::VectorXd diff = ti - tj;
    const double norm = diff.norm();
    g.loss.alpha_psi = alpha_psi;
    g.loss.theta_term = theta_term_from(norm, targets);
    g.loss.model_term_i = model_term_from(ri);
    g.loss.model_term_j = model_term_from(rj);
    g.loss.total = alpha_psi * g.loss.theta_term + g.loss.model_term_i + g.loss.model_term_j;

    // Theta term: the W2 targets are constants, so only psi(I1), psi(I2) move.
    Eigen::VectorXd gi = Eigen::VectorXd::Zero(psi.dim());
    if (norm > 0.0) {
        double coeff = 0.0;
        for (double w : targets) coeff += norm - w;
        coeff *= 2.0 / static_cast<double>(targets.size());
        gi = alpha_psi * coeff * diff / norm;
    }
    Eigen::VectorXd gj = -gi;
    if (options.psi_receives_model_gradient) {
        const double si = 2.0 / static_cast<double>(ri.size());
        const double sj = 2.0 / static_cast<double>(rj.size());
        gi += si * model.mean.w_theta.transpose() * ri.rowwise().sum();
        gj += sj * model.mean.w_theta.transpose() * rj.rowwise().sum();
    }
    g.psi[bi.env_id] = std::move(gi);
    g.psi[bj.env_id] = std::move(gj);

    const int D = model.feature_dim();
    g.mean = AffineHead::zeros(D, D, model.n_actions, model.theta_dim);
    g.logvar = AffineHead::zeros(D, D, model.n_actions, model.theta_dim);
    accumulate_head_gradient(g.mean, model, bi, ri, ti);
    accumulate_head_gradient(g.mean, model, bj, rj, tj);
    return g;
}

Eigen::VectorXd model_term_theta_gradient(const LatentDynamicsModel& model, const TransitionBatch& batch,
                                          const Eigen::VectorXd& theta) {
    batch.validate(model.n_states(), model.n_actions);
    require(theta.size() == model.theta_dim, "model_term_theta_gradient: theta dimension mismatch");
    const Eigen::MatrixXd r = residuals(model, batch, theta);
    return (2.0 / static_cast<double>(r.size())) * model.mean.w_theta.transpose() * r.rowwise().sum();
}

bool operator==(const TrainConfig& a, const TrainConfig& b) {
    return a.steps == b.steps && a.batch_size == b.batch_size && a.lr_psi == b.lr_psi && a.lr_model == b.lr_model &&
           a.alpha_psi == b.alpha_psi && a.embedding_dim == b.embedding_dim && a.init_scale == b.init_scale &&
           a.loss.pairing == b.loss.pairing && a.loss.psi_receives_model_gradient == b.loss.psi_receives_model_gradient &&
           a.seed == b.seed;
}

namespace {

int sample_next(const TabularMDP& mdp, int s, int a, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng);
    double acc = 0.0;
    const auto& t = mdp.transition(a);
    for (int k = 0; k < mdp.n_states(); ++k) {
        acc += t(s, k);
        if (u < acc) return k;
    }
    // Guard against rounding in the cumulative sum: the last state with positive mass.
    for (int k = mdp.n_states() - 1; k >= 0; --k)
        if (t(s, k) > 0.0) return k;
    return mdp.n_states() - 1;
}

TransitionBatch draw_batch(int env_id, const std::vector<Transition>& buffer, int size, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, buffer.size() - 1);
    TransitionBatch b;
    b.env_id = env_id;
    b.samples.reserve(static_cast<std::size_t>(size));
    for (int k = 0; k < size; ++k) b.samples.push_back(buffer[pick(rng)]);
    return b;
}

}  // namespace

std::vector<Transition> collect_uniform(const TabularMDP& mdp, int n, std::uint64_t seed) {
    require(n > 0, "collect_uniform: n must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> state(0, mdp.n_states() - 1);
    std::uniform_int_distribution<int> action(0, mdp.n_actions() - 1);
    std::vector<Transition> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const int s = state(rng);
        const int a = action(rng);
        out.push_back(Transition{s, a, sample_next(mdp, s, a, rng)});
    }
    return out;
}

std::vector<Transition> collect_trajectories(const TabularMDP& mdp, const Policy& policy, int episodes, int horizon,
                                             std::uint64_t seed) {
    require(episodes > 0 && horizon > 0, "collect_trajectories: episodes and horizon must be positive");
    require(policy.n_states() == mdp.n_states() && policy.n_actions() == mdp.n_actions(),
            "collect_trajectories: policy shape does not match the MDP");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> state(0, mdp.n_states() - 1);
    std::vector<Transition> out;
    out.reserve(static_cast<std::size_t>(episodes) * static_cast<std::size_t>(horizon));
    for (int e = 0; e < episodes; ++e) {
        int s = state(rng);
        for (int t = 0; t < horizon; ++t) {
            const int a = policy.sample(s, rng);
            const int next = sample_next(mdp, s, a, rng);
            out.push_back(Transition{s, a, next});
            s = next;
        }
    }
    return out;
}

TrainResult train(const HiPFamily& family, const ReplayBuffers& buffers, const TrainConfig& config) {
    require(buffers.size() >= 2, "train: at least two training environments required");
    require(config.steps >= 0 && config.batch_size > 0, "train: steps >= 0 and batch_size > 0 required");
    require(config.lr_psi >= 0.0 && config.lr_model >= 0.0, "train: learning rates must be nonnegative");
    require(config.embedding_dim > 0 && config.init_scale >= 0.0, "train: invalid embedding configuration");
    for (const auto& [env, buffer] : buffers) {
        require(env >= 0 && env < family.n_members(), "train: buffer for unknown environment");
        require(!buffer.empty(), "train: empty replay buffer");
    }

    std::mt19937_64 init_rng(mix_seed(config.seed, 1));
    std::mt19937_64 batch_rng(mix_seed(config.seed, 2));
    std::normal_distribution<double> normal(0.0, 1.0);

    TrainResult result{TaskEmbeddingTable(config.embedding_dim),
                       LatentDynamicsModel::one_hot(family.n_states(), family.n_actions(), config.embedding_dim),
                       {}};
    for (const auto& [env, _] : buffers) {
        Eigen::VectorXd t(config.embedding_dim);
        for (int k = 0; k < config.embedding_dim; ++k) t(k) = config.init_scale * normal(init_rng);
        result.psi.set(env, std::move(t));
    }

    for (int step = 0; step < config.steps; ++step)
        for (const auto& [env_i, buffer_i] : buffers)
            for (const auto& [env_j, buffer_j] : buffers) {
                if (env_i == env_j) continue;
                const TransitionBatch bi = draw_batch(env_i, buffer_i, config.batch_size, batch_rng);
                const TransitionBatch bj = draw_batch(env_j, buffer_j, config.batch_size, batch_rng);
                const ParameterGradients g =
                    gradients(bi, bj, result.psi, result.model, config.alpha_psi, config.loss);
                if (!std::isfinite(g.loss.total))
                    throw NumericalError("train: non-finite loss at step " + std::to_string(step) + " (envs " +
                                         std::to_string(env_i) + ", " + std::to_string(env_j) + ")");
                for (const auto& [env, grad] : g.psi) result.psi.at(env) -= config.lr_psi * grad;
                result.model.mean.add_scaled(g.mean, -config.lr_model);
                result.model.logvar.add_scaled(g.logvar, -config.lr_model);
                if (!result.model.mean.all_finite() || !result.psi.at(env_i).allFinite() ||
                    !result.psi.at(env_j).allFinite())
                    throw NumericalError("train: parameters diverged at step " + std::to_string(step));
                result.log.push_back(TrainLogEntry{step, env_i, env_j, g.loss});
            }
    return result;
}

Eigen::VectorXd rollout_error(const LatentDynamicsModel& model, const Eigen::VectorXd& theta, const TabularMDP& mdp,
                              const Policy& policy, int k, int n_episodes, std::uint64_t seed) {
    require(k >= 1 && n_episodes >= 1, "rollout_error: k and n_episodes must be positive");
    require(mdp.n_states() == model.n_states() && mdp.n_actions() == model.n_actions,
            "rollout_error: model and MDP shapes differ");
    require(policy.n_states() == mdp.n_states() && policy.n_actions() == mdp.n_actions(),
            "rollout_error: policy shape does not match the MDP");
    require(theta.size() == model.theta_dim, "rollout_error: theta dimension mismatch");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> start(0, mdp.n_states() - 1);
    Eigen::VectorXd err = Eigen::VectorXd::Zero(k);
    for (int e = 0; e < n_episodes; ++e) {
        int s = start(rng);
        Eigen::VectorXd latent = model.features(s);
        for (int t = 0; t < k; ++t) {
            const int a = policy.sample(s, rng);
            s = sample_next(mdp, s, a, rng);
            latent = model.mean.apply(latent, a, theta);
            err(t) += (latent - model.features(s)).norm();
        }
    }
    return err / static_cast<double>(n_episodes);
}

AdaptResult adapt_theta(const LatentDynamicsModel& model, const TransitionBatch& batch,
                        const Eigen::VectorXd& initial_theta, int steps, double lr,
                        const std::optional<RolloutProbe>& probe) {
    require(steps >= 0, "adapt_theta: steps must be nonnegative");
    require(std::isfinite(lr) && lr >= 0.0, "adapt_theta: lr must be nonnegative");
    require(initial_theta.size() == model.theta_dim && initial_theta.allFinite(), "adapt_theta: invalid initial theta");
    batch.validate(model.n_states(), model.n_actions);

    AdaptResult out;
    out.theta_hat = initial_theta;
    auto record = [&] {
        out.model_error.push_back(model_term(model, batch, out.theta_hat));
        if (probe)
            out.rollout_error.push_back(
                rollout_error(model, out.theta_hat, probe->mdp, probe->policy, probe->k, probe->n_episodes, probe->seed)
                    .mean());
    };
    record();
    for (int step = 0; step < steps; ++step) {
        out.theta_hat -= lr * model_term_theta_gradient(model, batch, out.theta_hat);
        if (!out.theta_hat.allFinite()) throw NumericalError("adapt_theta: theta diverged");
        record();
    }
    return out;
}

}  // namespace hipbmdp
