#include "hipbmdp/family.hpp"

#include "hipbmdp/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace hipbmdp {

LogitGenerator::LogitGenerator(std::vector<Eigen::MatrixXd> base,
                               std::vector<std::vector<Eigen::MatrixXd>> directions)
    : base_(std::move(base)), directions_(std::move(directions)) {
    require(!base_.empty(), "LogitGenerator: no actions");
    const Eigen::Index S = base_.front().rows();
    require(S > 0, "LogitGenerator: no states");
    for (const auto& b : base_)
        require(b.rows() == S && b.cols() == S && b.allFinite(), "LogitGenerator: base logits must be finite S x S");
    for (const auto& per_action : directions_) {
        require(per_action.size() == base_.size(), "LogitGenerator: one direction matrix per action required");
        for (const auto& d : per_action)
            require(d.rows() == S && d.cols() == S && d.allFinite(),
                    "LogitGenerator: directions must be finite S x S");
    }
}

std::vector<Eigen::MatrixXd> LogitGenerator::transitions(const Eigen::VectorXd& theta) const {
    require(theta.size() == theta_dim(), "LogitGenerator: theta has length " + std::to_string(theta.size()) +
                                             ", expected " + std::to_string(theta_dim()));
    require(theta.allFinite(), "LogitGenerator: theta must be finite");
    std::vector<Eigen::MatrixXd> out;
    out.reserve(base_.size());
    for (std::size_t a = 0; a < base_.size(); ++a) {
        Eigen::MatrixXd logits = base_[a];
        for (std::size_t k = 0; k < directions_.size(); ++k) logits += theta(static_cast<Eigen::Index>(k)) * directions_[k][a];
        for (Eigen::Index s = 0; s < logits.rows(); ++s) {
            Eigen::RowVectorXd row = (logits.row(s).array() - logits.row(s).maxCoeff()).exp();
            const double z = row.sum();
            row /= z;
            // Exact renormalization so every row passes the 1e-12 stochasticity check.
            const double sum = row.sum();
            if (sum != 1.0) row /= sum;
            logits.row(s) = row;
        }
        out.push_back(std::move(logits));
    }
    return out;
}

double LogitGenerator::lipschitz_tv() const {
    double L = 0.0;
    for (const auto& per_action : directions_)
        for (const auto& d : per_action)
            for (Eigen::Index s = 0; s < d.rows(); ++s)
                L = std::max(L, 0.5 * (d.row(s).maxCoeff() - d.row(s).minCoeff()));
    return L;
}

Split default_split(const std::vector<std::string>& labels) {
    const int n = static_cast<int>(labels.size());
    require(n >= 3, "default_split: at least 3 members required");
    Split split;
    int first = 0;
    int last = n - 1;
    if (n >= 5) {
        split.extrapolation = {labels.front(), labels.back()};
        first = 1;
        last = n - 2;
    }
    const int interior = last - first + 1;
    int held = interior / 3;
    if (held % 2 != interior % 2) ++held;
    const int start = first + (interior - held) / 2;
    for (int k = first; k <= last; ++k) {
        if (k >= start && k < start + held)
            split.interpolation.push_back(labels[k]);
        else
            split.train.push_back(labels[k]);
    }
    return split;
}

std::vector<std::string> member_labels(int n_members) {
    require(n_members > 0, "member_labels: need at least one member");
    std::vector<std::string> labels;
    labels.reserve(static_cast<std::size_t>(n_members));
    for (int k = 0; k < n_members; ++k)
        labels.push_back(n_members <= 26 ? std::string(1, static_cast<char>('A' + k)) : "I" + std::to_string(k + 1));
    return labels;
}

HiPFamily::HiPFamily(LogitGenerator generator, Eigen::MatrixXd rewards, double gamma, double r_max,
                     std::vector<std::string> labels, std::vector<Eigen::VectorXd> thetas, Split split)
    : generator_(std::move(generator)),
      rewards_(std::move(rewards)),
      gamma_(gamma),
      r_max_(r_max),
      labels_(std::move(labels)),
      thetas_(std::move(thetas)),
      split_(std::move(split)) {
    require(rewards_.rows() == generator_.n_states() && rewards_.cols() == generator_.n_actions(),
            "HiPFamily: rewards must be S x A");
    require(!labels_.empty(), "HiPFamily: no members");
    require(labels_.size() == thetas_.size(), "HiPFamily: one theta per label required");
    std::set<std::string> unique(labels_.begin(), labels_.end());
    require(unique.size() == labels_.size(), "HiPFamily: duplicate member label");
    for (const auto& t : thetas_)
        require(t.size() == generator_.theta_dim() && t.allFinite(), "HiPFamily: theta dimension mismatch");

    std::set<std::string> seen;
    for (const auto* part : {&split_.train, &split_.interpolation, &split_.extrapolation})
        for (const auto& label : *part) {
            require(unique.count(label) != 0, "HiPFamily: split names unknown member " + label);
            require(seen.insert(label).second, "HiPFamily: split assigns " + label + " twice");
        }
    require(seen.size() == labels_.size(), "HiPFamily: split does not cover every member");
    // Validates gamma, r_max and the reward range once.
    (void)member(0);
}

int HiPFamily::index_of(const std::string& label) const {
    const auto it = std::find(labels_.begin(), labels_.end(), label);
    require(it != labels_.end(), "unknown environment label '" + label + "'");
    return static_cast<int>(it - labels_.begin());
}

std::vector<int> HiPFamily::indices_of(const std::vector<std::string>& labels) const {
    std::vector<int> out;
    out.reserve(labels.size());
    for (const auto& l : labels) out.push_back(index_of(l));
    return out;
}

TabularMDP HiPFamily::member(int index) const {
    require(index >= 0 && index < n_members(), "HiPFamily: member index out of range");
    return instantiate(*this, thetas_[static_cast<std::size_t>(index)]);
}

TabularMDP instantiate(const HiPFamily& family, const Eigen::VectorXd& theta) {
    return TabularMDP(family.generator().transitions(theta), family.shared_rewards(), family.gamma(),
                      family.r_max());
}

HiPFamily sample_family(const FamilySpec& spec, std::uint64_t seed) {
    require(spec.n_states > 0 && spec.n_actions > 0, "FamilySpec: n_states and n_actions must be positive");
    require(spec.theta_dim > 0, "FamilySpec: theta_dim must be positive");
    require(spec.n_members >= 3, "FamilySpec: at least 3 members required");
    require(std::isfinite(spec.perturbation_scale) && spec.perturbation_scale >= 0.0,
            "FamilySpec: perturbation_scale must be nonnegative");
    require(std::isfinite(spec.logit_scale) && spec.logit_scale >= 0.0, "FamilySpec: logit_scale must be nonnegative");
    require(spec.gamma >= 0.0 && spec.gamma < 1.0, "FamilySpec: gamma must lie in [0, 1)");
    require(std::isfinite(spec.r_max) && spec.r_max > 0.0, "FamilySpec: r_max must be positive");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int S = spec.n_states;
    const int A = spec.n_actions;

    auto normal_matrix = [&](double scale) {
        Eigen::MatrixXd m(S, S);
        for (int r = 0; r < S; ++r)
            for (int c = 0; c < S; ++c) m(r, c) = scale * normal(rng);
        return m;
    };

    std::vector<Eigen::MatrixXd> base;
    for (int a = 0; a < A; ++a) base.push_back(normal_matrix(spec.logit_scale));
    std::vector<std::vector<Eigen::MatrixXd>> directions(static_cast<std::size_t>(spec.theta_dim));
    for (auto& per_action : directions)
        for (int a = 0; a < A; ++a) per_action.push_back(normal_matrix(1.0));

    Eigen::MatrixXd rewards(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) rewards(s, a) = spec.r_max * unit(rng);

    std::vector<Eigen::VectorXd> thetas;
    for (int m = 0; m < spec.n_members; ++m) {
        Eigen::VectorXd t(spec.theta_dim);
        for (int k = 0; k < spec.theta_dim; ++k) t(k) = spec.perturbation_scale * (2.0 * unit(rng) - 1.0);
        thetas.push_back(std::move(t));
    }
    std::stable_sort(thetas.begin(), thetas.end(),
                     [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a(0) < b(0); });

    auto labels = member_labels(spec.n_members);
    auto split = default_split(labels);
    return HiPFamily(LogitGenerator(std::move(base), std::move(directions)), std::move(rewards), spec.gamma,
                     spec.r_max, std::move(labels), std::move(thetas), std::move(split));
}

}  // namespace hipbmdp
