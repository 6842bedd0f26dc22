#pragma once

#include "hipbmdp/mdp.hpp"
#include "hipbmdp/transport.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>

namespace hipbmdp {

struct ThetaDistanceReport {
    double value = 0.0;
    int argmax_state = 0;
    int argmax_action = 0;
    /// S x A matrix of W1 gaps, when requested.
    std::optional<Eigen::MatrixXd> per_pair_matrix;
};

/// max over (s, a) of W1_g(T_i(s,a), T_j(s,a)). Ties keep the first (s, a) in row-major order.
ThetaDistanceReport theta_distance(const TabularMDP& mdp_i, const TabularMDP& mdp_j, const GroundMetric& g,
                                   bool keep_matrix = true);

/// rho-weighted mean of the per-(s,a) W1 gaps; rho is indexed by s * A + a.
double theta_distance_expected(const TabularMDP& mdp_i, const TabularMDP& mdp_j, const GroundMetric& g,
                               const DiscreteDistribution& rho);

enum class GroundMetricKind {
    Discrete,      ///< 0/1 metric between distinct states
    OneHotL1,      ///< ||e_s - e_t||_1 on one-hot state features (2 x discrete)
    Bisimulation,  ///< bisimulation metric of a base task
};

std::string to_string(GroundMetricKind kind);
GroundMetricKind ground_metric_from_string(const std::string& name);

/// Ground metric over the states of `base`. Only Bisimulation looks at base's dynamics.
GroundMetric make_ground_metric(GroundMetricKind kind, const TabularMDP& base, double bisim_tol = 1e-8);

}  // namespace hipbmdp
