#pragma once

#include "hipbmdp/mdp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace hipbmdp {

/// Smooth map from a hidden parameter to a transition tensor:
///
///     T_theta(.|s,a) = softmax( base(s,a,.) + sum_k theta_k * direction_k(s,a,.) )
///
/// Every output row is a valid distribution, and the map is Lipschitz:
/// TV(T_theta(s,a), T_theta'(s,a)) <= lipschitz_tv() * ||theta - theta'||_1.
class LogitGenerator {
public:
    /// `base[a]` is S x S; `directions[k][a]` is S x S.
    LogitGenerator(std::vector<Eigen::MatrixXd> base, std::vector<std::vector<Eigen::MatrixXd>> directions);

    int n_states() const { return static_cast<int>(base_.front().rows()); }
    int n_actions() const { return static_cast<int>(base_.size()); }
    int theta_dim() const { return static_cast<int>(directions_.size()); }

    const std::vector<Eigen::MatrixXd>& base_logits() const { return base_; }
    const std::vector<std::vector<Eigen::MatrixXd>>& directions() const { return directions_; }

    std::vector<Eigen::MatrixXd> transitions(const Eigen::VectorXd& theta) const;

    /// max over (k, s, a) of half the spread of direction_k(s,a,.).
    double lipschitz_tv() const;

private:
    std::vector<Eigen::MatrixXd> base_;
    std::vector<std::vector<Eigen::MatrixXd>> directions_;
};

struct Split {
    std::vector<std::string> train;
    std::vector<std::string> interpolation;
    std::vector<std::string> extrapolation;
};

/// Partition of members ordered by theta.
///
/// For N >= 5 the first and last member extrapolate. The remaining interior
/// block keeps its central members for interpolation: floor(interior / 3),
/// bumped by one when its parity differs from the interior size so the held-out
/// block sits symmetrically. Everything else trains. N = 8 yields
/// train {B, C, F, G}, interpolation {D, E}, extrapolation {A, H}.
/// N = 3 and N = 4 have no extrapolation members.
Split default_split(const std::vector<std::string>& labels);

/// Member labels: A, B, C, ... for N <= 26, otherwise I1 .. IN.
std::vector<std::string> member_labels(int n_members);

/// A hidden-parameter MDP family: shared states, actions, rewards and discount;
/// transitions selected by theta through the generator.
class HiPFamily {
public:
    HiPFamily(LogitGenerator generator, Eigen::MatrixXd rewards, double gamma, double r_max,
              std::vector<std::string> labels, std::vector<Eigen::VectorXd> thetas, Split split);

    int theta_dim() const { return generator_.theta_dim(); }
    int n_states() const { return generator_.n_states(); }
    int n_actions() const { return generator_.n_actions(); }
    int n_members() const { return static_cast<int>(labels_.size()); }
    double gamma() const { return gamma_; }
    double r_max() const { return r_max_; }

    const LogitGenerator& generator() const { return generator_; }
    const Eigen::MatrixXd& shared_rewards() const { return rewards_; }
    const std::vector<std::string>& labels() const { return labels_; }
    const std::vector<Eigen::VectorXd>& thetas() const { return thetas_; }
    const Eigen::VectorXd& theta(int member) const { return thetas_.at(member); }
    const Split& split() const { return split_; }

    /// Throws ValidationError for an unknown label.
    int index_of(const std::string& label) const;
    std::vector<int> indices_of(const std::vector<std::string>& labels) const;

    TabularMDP member(int index) const;

private:
    LogitGenerator generator_;
    Eigen::MatrixXd rewards_;
    double gamma_;
    double r_max_;
    std::vector<std::string> labels_;
    std::vector<Eigen::VectorXd> thetas_;
    Split split_;
};

/// T_theta with the family's shared rewards and discount.
TabularMDP instantiate(const HiPFamily& family, const Eigen::VectorXd& theta);

struct FamilySpec {
    int n_states = 6;
    int n_actions = 2;
    int theta_dim = 1;
    int n_members = 8;
    double perturbation_scale = 1.0;
    double logit_scale = 1.0;
    double gamma = 0.9;
    double r_max = 1.0;

    friend bool operator==(const FamilySpec&, const FamilySpec&) = default;
};

/// Random family: base logits ~ N(0, logit_scale^2), unit-normal directions,
/// member thetas = perturbation_scale * U[-1, 1]^d sorted by first coordinate,
/// rewards ~ U[0, r_max]. Reproducible from `seed`.
HiPFamily sample_family(const FamilySpec& spec, std::uint64_t seed);

}  // namespace hipbmdp
