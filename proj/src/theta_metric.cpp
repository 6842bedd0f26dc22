#include "hipbmdp/theta_metric.hpp"

#include "hipbmdp/bisim.hpp"
#include "hipbmdp/error.hpp"

#include <vector>

namespace hipbmdp {

namespace {

Eigen::MatrixXd per_pair_gaps(const TabularMDP& mdp_i, const TabularMDP& mdp_j, const GroundMetric& g) {
    require(mdp_i.n_states() == mdp_j.n_states() && mdp_i.n_actions() == mdp_j.n_actions(),
            "theta_distance: state or action sets differ");
    require(g.size() == mdp_i.n_states(), "theta_distance: ground metric size differs from the state count");
    const int S = mdp_i.n_states();
    const int A = mdp_i.n_actions();
    Eigen::MatrixXd gaps(S, A);
    std::vector<double> p(static_cast<std::size_t>(S));
    std::vector<double> q(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            for (int k = 0; k < S; ++k) {
                p[static_cast<std::size_t>(k)] = mdp_i.transition(a)(s, k);
                q[static_cast<std::size_t>(k)] = mdp_j.transition(a)(s, k);
            }
            gaps(s, a) = transport_cost(p, q, g.matrix());
        }
    return gaps;
}

}  // namespace

ThetaDistanceReport theta_distance(const TabularMDP& mdp_i, const TabularMDP& mdp_j, const GroundMetric& g,
                                   bool keep_matrix) {
    Eigen::MatrixXd gaps = per_pair_gaps(mdp_i, mdp_j, g);
    ThetaDistanceReport report;
    report.value = gaps(0, 0);
    for (Eigen::Index s = 0; s < gaps.rows(); ++s)
        for (Eigen::Index a = 0; a < gaps.cols(); ++a)
            if (gaps(s, a) > report.value) {
                report.value = gaps(s, a);
                report.argmax_state = static_cast<int>(s);
                report.argmax_action = static_cast<int>(a);
            }
    if (keep_matrix) report.per_pair_matrix = std::move(gaps);
    return report;
}

double theta_distance_expected(const TabularMDP& mdp_i, const TabularMDP& mdp_j, const GroundMetric& g,
                               const DiscreteDistribution& rho) {
    const Eigen::MatrixXd gaps = per_pair_gaps(mdp_i, mdp_j, g);
    const int A = static_cast<int>(gaps.cols());
    require(rho.support_size() == gaps.size(), "theta_distance_expected: rho must cover every (s, a)");
    double total = 0.0;
    for (Eigen::Index s = 0; s < gaps.rows(); ++s)
        for (int a = 0; a < A; ++a) total += rho[static_cast<int>(s) * A + a] * gaps(s, a);
    return total;
}

std::string to_string(GroundMetricKind kind) {
    switch (kind) {
        case GroundMetricKind::Discrete: return "discrete";
        case GroundMetricKind::OneHotL1: return "one_hot_l1";
        case GroundMetricKind::Bisimulation: return "bisimulation";
    }
    return "unknown";
}

GroundMetricKind ground_metric_from_string(const std::string& name) {
    if (name == "discrete") return GroundMetricKind::Discrete;
    if (name == "one_hot_l1") return GroundMetricKind::OneHotL1;
    if (name == "bisimulation") return GroundMetricKind::Bisimulation;
    throw ValidationError("unknown ground metric '" + name + "'");
}

GroundMetric make_ground_metric(GroundMetricKind kind, const TabularMDP& base, double bisim_tol) {
    const int S = base.n_states();
    switch (kind) {
        case GroundMetricKind::Discrete: return GroundMetric::discrete(S);
        case GroundMetricKind::OneHotL1: return GroundMetric::l1_features(Eigen::MatrixXd::Identity(S, S));
        case GroundMetricKind::Bisimulation: return GroundMetric(bisim_metric(base, bisim_tol).d);
    }
    throw ValidationError("unknown ground metric kind");
}

}  // namespace hipbmdp
