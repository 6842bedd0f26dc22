#pragma once

// Straight-line re-implementation of the multi-task loss for tests: plain loops,
// no shared helpers with the library.

#include "hipbmdp/learner.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace testutil {

inline std::vector<double> head_output(const hipbmdp::AffineHead& h, const Eigen::VectorXd& f, int a,
                                       const Eigen::VectorXd& theta) {
    std::vector<double> out(static_cast<std::size_t>(h.bias.size()));
    for (Eigen::Index o = 0; o < h.bias.size(); ++o) {
        double v = h.bias(o) + h.w_action(o, a);
        for (Eigen::Index k = 0; k < f.size(); ++k) v += h.w_state(o, k) * f(k);
        for (Eigen::Index k = 0; k < theta.size(); ++k) v += h.w_theta(o, k) * theta(k);
        out[static_cast<std::size_t>(o)] = v;
    }
    return out;
}

inline double w2_straight(const hipbmdp::LatentDynamicsModel& m, const hipbmdp::Transition& x,
                          const Eigen::VectorXd& tx, const hipbmdp::Transition& y, const Eigen::VectorXd& ty) {
    const auto mx = head_output(m.mean, m.features(x.state), x.action, tx);
    const auto my = head_output(m.mean, m.features(y.state), y.action, ty);
    const auto lx = head_output(m.logvar, m.features(x.state), x.action, tx);
    const auto ly = head_output(m.logvar, m.features(y.state), y.action, ty);
    double sum = 0.0;
    for (std::size_t o = 0; o < mx.size(); ++o) {
        const double vx = std::min(std::max(std::exp(lx[o]), hipbmdp::kMinVariance), hipbmdp::kMaxVariance);
        const double vy = std::min(std::max(std::exp(ly[o]), hipbmdp::kMinVariance), hipbmdp::kMaxVariance);
        sum += (mx[o] - my[o]) * (mx[o] - my[o]) + (std::sqrt(vx) - std::sqrt(vy)) * (std::sqrt(vx) - std::sqrt(vy));
    }
    return std::sqrt(sum);
}

inline std::vector<double> targets_straight(const hipbmdp::TransitionBatch& bi, const hipbmdp::TransitionBatch& bj,
                                            const Eigen::VectorXd& ti, const Eigen::VectorXd& tj,
                                            const hipbmdp::LatentDynamicsModel& m, bool positional) {
    std::vector<double> w;
    for (std::size_t k = 0; k < bi.samples.size(); ++k)
        w.push_back(w2_straight(m, bi.samples[k], ti, positional ? bj.samples[k] : bi.samples[k], tj));
    return w;
}

inline double model_term_straight(const hipbmdp::LatentDynamicsModel& m, const hipbmdp::TransitionBatch& b,
                                  const Eigen::VectorXd& theta) {
    double sum = 0.0;
    for (const auto& t : b.samples) {
        const auto mu = head_output(m.mean, m.features(t.state), t.action, theta);
        const Eigen::VectorXd target = m.features(t.next_state);
        for (std::size_t o = 0; o < mu.size(); ++o)
            sum += (mu[o] - target(static_cast<Eigen::Index>(o))) * (mu[o] - target(static_cast<Eigen::Index>(o)));
    }
    return sum / (static_cast<double>(b.samples.size()) * static_cast<double>(m.feature_dim()));
}

/// alpha * mean_k (||ti - tj||_2 - w_k)^2 + model terms, with the targets w held fixed.
inline double loss_straight(const hipbmdp::TransitionBatch& bi, const hipbmdp::TransitionBatch& bj,
                            const Eigen::VectorXd& ti, const Eigen::VectorXd& tj,
                            const hipbmdp::LatentDynamicsModel& m, double alpha, const std::vector<double>& w) {
    double norm = 0.0;
    for (Eigen::Index k = 0; k < ti.size(); ++k) norm += (ti(k) - tj(k)) * (ti(k) - tj(k));
    norm = std::sqrt(norm);
    double theta_term = 0.0;
    for (double x : w) theta_term += (norm - x) * (norm - x);
    theta_term /= static_cast<double>(w.size());
    return alpha * theta_term + model_term_straight(m, bi, ti) + model_term_straight(m, bj, tj);
}

inline void randomize(hipbmdp::AffineHead& h, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> n(0.0, scale);
    for (Eigen::MatrixXd* w : {&h.w_state, &h.w_action, &h.w_theta})
        for (Eigen::Index k = 0; k < w->size(); ++k) w->data()[k] = n(rng);
    for (Eigen::Index k = 0; k < h.bias.size(); ++k) h.bias(k) = n(rng);
}

inline hipbmdp::TransitionBatch random_batch(int env, int size, int S, int A, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> s(0, S - 1), a(0, A - 1);
    hipbmdp::TransitionBatch b;
    b.env_id = env;
    for (int k = 0; k < size; ++k) b.samples.push_back({s(rng), a(rng), s(rng)});
    return b;
}

/// Relative agreement with an absolute floor for vanishing coordinates.
inline bool close_relative(double analytic, double numeric, double rel, double floor = 1e-9) {
    const double diff = std::abs(analytic - numeric);
    return diff <= floor || diff <= rel * std::max(std::abs(analytic), std::abs(numeric));
}

}  // namespace testutil
