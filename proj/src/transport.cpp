#include "hipbmdp/transport.hpp"

#include "hipbmdp/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace hipbmdp {

namespace {

constexpr double kSumTol = 1e-12;
constexpr double kMassEps = 1e-15;
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_probs(std::span<const double> p, const char* what) {
    require(!p.empty(), std::string(what) + ": empty support");
    double sum = 0.0;
    for (double v : p) {
        require(std::isfinite(v) && v >= 0.0, std::string(what) + ": entries must be finite and nonnegative");
        sum += v;
    }
    require(std::abs(sum - 1.0) <= kSumTol, std::string(what) + ": probabilities must sum to 1");
}

void check_metric_matrix(const Eigen::MatrixXd& d) {
    require(d.rows() > 0 && d.rows() == d.cols(), "GroundMetric: matrix must be square and nonempty");
    require(d.allFinite(), "GroundMetric: entries must be finite");
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        require(d(i, i) == 0.0, "GroundMetric: diagonal must be zero");
        for (Eigen::Index j = 0; j < d.cols(); ++j) {
            require(d(i, j) >= 0.0, "GroundMetric: distances must be nonnegative");
            require(d(i, j) == d(j, i), "GroundMetric: matrix must be symmetric");
        }
    }
}

}  // namespace

DiscreteDistribution::DiscreteDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    check_probs(probs_, "DiscreteDistribution");
}

DiscreteDistribution DiscreteDistribution::point_mass(int size, int index) {
    require(size > 0 && index >= 0 && index < size, "DiscreteDistribution: point mass index out of range");
    std::vector<double> p(static_cast<std::size_t>(size), 0.0);
    p[static_cast<std::size_t>(index)] = 1.0;
    return DiscreteDistribution(std::move(p));
}

DiscreteDistribution DiscreteDistribution::uniform(int size) {
    require(size > 0, "DiscreteDistribution: size must be positive");
    return DiscreteDistribution(std::vector<double>(static_cast<std::size_t>(size), 1.0 / size));
}

GroundMetric::GroundMetric(Eigen::MatrixXd distances, bool check_triangle) : d_(std::move(distances)) {
    check_metric_matrix(d_);
    if (!check_triangle) return;
    const Eigen::Index n = d_.rows();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index k = 0; k < n; ++k)
                require(d_(i, j) <= d_(i, k) + d_(k, j) + 1e-9, "GroundMetric: triangle inequality violated");
}

GroundMetric GroundMetric::discrete(int size) {
    require(size > 0, "GroundMetric: size must be positive");
    Eigen::MatrixXd d = Eigen::MatrixXd::Ones(size, size);
    d.diagonal().setZero();
    return GroundMetric(std::move(d));
}

GroundMetric GroundMetric::line(int size) {
    require(size > 0, "GroundMetric: size must be positive");
    Eigen::MatrixXd d(size, size);
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) d(i, j) = std::abs(i - j);
    return GroundMetric(std::move(d));
}

GroundMetric GroundMetric::l1_features(const Eigen::MatrixXd& features) {
    require(features.cols() > 0, "GroundMetric: no feature columns");
    const Eigen::Index n = features.cols();
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (features.col(i) - features.col(j)).lpNorm<1>();
    return GroundMetric(std::move(d));
}

DiagonalGaussian::DiagonalGaussian(Eigen::VectorXd m, Eigen::VectorXd v) : mean(std::move(m)), variance(std::move(v)) {
    require(mean.size() == variance.size() && mean.size() > 0, "DiagonalGaussian: mean and variance sizes differ");
    require(mean.allFinite(), "DiagonalGaussian: mean must be finite");
    require((variance.array() > 0.0).all() && variance.allFinite(), "DiagonalGaussian: variances must be positive");
}

TransportSolution solve_transport(std::span<const double> supply, std::span<const double> demand,
                                  const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(supply.size());
    const int m = static_cast<int>(demand.size());
    require(n > 0 && m > 0, "solve_transport: empty marginal");
    require(cost.rows() == n && cost.cols() == m, "solve_transport: cost matrix shape does not match marginals");
    require(cost.allFinite() && (cost.array() >= 0.0).all(), "solve_transport: costs must be finite and nonnegative");
    double total_supply = 0.0;
    double total_demand = 0.0;
    for (double s : supply) {
        require(std::isfinite(s) && s >= 0.0, "solve_transport: supplies must be finite and nonnegative");
        total_supply += s;
    }
    for (double d : demand) {
        require(std::isfinite(d) && d >= 0.0, "solve_transport: demands must be finite and nonnegative");
        total_demand += d;
    }
    require(std::abs(total_supply - total_demand) <= 1e-9, "solve_transport: marginals are unbalanced");

    // Nodes 0..n-1 are supplies, n..n+m-1 demands. Potentials keep every residual
    // arc's reduced cost nonnegative; supplies with remaining mass stay at potential 0.
    const int V = n + m;
    std::vector<double> rem_supply(supply.begin(), supply.end());
    std::vector<double> rem_demand(demand.begin(), demand.end());
    Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(n, m);
    std::vector<double> pot(static_cast<std::size_t>(V), 0.0);
    std::vector<double> dist(static_cast<std::size_t>(V));
    std::vector<int> parent(static_cast<std::size_t>(V));
    std::vector<char> done(static_cast<std::size_t>(V));

    const long cap = 16L * V * V + 64;
    for (long round = 0;; ++round) {
        bool any_supply = false;
        for (double s : rem_supply) any_supply = any_supply || s > kMassEps;
        bool any_demand = false;
        for (double d : rem_demand) any_demand = any_demand || d > kMassEps;
        if (!any_supply || !any_demand) break;
        if (round > cap) throw NumericalError("solve_transport: augmentation cap exceeded");

        std::fill(dist.begin(), dist.end(), kInf);
        std::fill(parent.begin(), parent.end(), -1);
        std::fill(done.begin(), done.end(), 0);
        for (int i = 0; i < n; ++i)
            if (rem_supply[i] > kMassEps) dist[i] = 0.0;

        int target = -1;
        for (;;) {
            int u = -1;
            for (int v = 0; v < V; ++v)
                if (!done[v] && dist[v] < kInf && (u < 0 || dist[v] < dist[u])) u = v;
            if (u < 0) break;
            done[u] = 1;
            if (u >= n && rem_demand[u - n] > kMassEps) {
                target = u;
                break;
            }
            if (u < n) {
                for (int j = 0; j < m; ++j) {
                    const int v = n + j;
                    if (done[v]) continue;
                    const double rc = std::max(0.0, cost(u, j) + pot[u] - pot[v]);
                    if (dist[u] + rc < dist[v]) {
                        dist[v] = dist[u] + rc;
                        parent[v] = u;
                    }
                }
            } else {
                const int j = u - n;
                for (int i = 0; i < n; ++i) {
                    if (done[i] || flow(i, j) <= kMassEps) continue;
                    const double rc = std::max(0.0, -cost(i, j) + pot[u] - pot[i]);
                    if (dist[u] + rc < dist[i]) {
                        dist[i] = dist[u] + rc;
                        parent[i] = u;
                    }
                }
            }
        }
        if (target < 0) throw NumericalError("solve_transport: no augmenting path");

        const double dt = dist[target];
        for (int v = 0; v < V; ++v) pot[v] += std::min(dist[v], dt);

        int source = target;
        while (parent[source] >= 0) source = parent[source];
        double bottleneck = std::min(rem_supply[source], rem_demand[target - n]);
        for (int v = target; parent[v] >= 0; v = parent[v])
            if (v < n) bottleneck = std::min(bottleneck, flow(v, parent[v] - n));

        for (int v = target; parent[v] >= 0; v = parent[v]) {
            const int u = parent[v];
            if (u < n) {
                flow(u, v - n) += bottleneck;
            } else {
                flow(v, u - n) -= bottleneck;
                if (flow(v, u - n) <= kMassEps) flow(v, u - n) = 0.0;
            }
        }
        rem_supply[source] -= bottleneck;
        if (rem_supply[source] <= kMassEps) rem_supply[source] = 0.0;
        rem_demand[target - n] -= bottleneck;
        if (rem_demand[target - n] <= kMassEps) rem_demand[target - n] = 0.0;
    }

    TransportSolution sol;
    sol.plan = std::move(flow);
    sol.cost = (sol.plan.array() * cost.array()).sum();
    sol.supply_potential.resize(n);
    sol.demand_potential.resize(m);
    for (int i = 0; i < n; ++i) sol.supply_potential(i) = pot[i];
    for (int j = 0; j < m; ++j) sol.demand_potential(j) = pot[n + j];
    // Tighten potentials so the dual constraints hold exactly despite rounding:
    // v_j = min_i (c_ij + u_i) keeps every constraint and every zero-reduced-cost arc tight.
    for (int j = 0; j < m; ++j) {
        double best = kInf;
        for (int i = 0; i < n; ++i) best = std::min(best, cost(i, j) + sol.supply_potential(i));
        sol.demand_potential(j) = best;
    }
    return sol;
}

double transport_cost(std::span<const double> supply, std::span<const double> demand, const Eigen::MatrixXd& cost) {
    if (supply.size() == demand.size() && std::equal(supply.begin(), supply.end(), demand.begin())) {
        require(cost.rows() == static_cast<Eigen::Index>(supply.size()) && cost.cols() == cost.rows(),
                "transport_cost: cost matrix shape does not match marginals");
        for (Eigen::Index i = 0; i < cost.rows(); ++i)
            require(cost(i, i) == 0.0, "transport_cost: identical marginals need a zero-diagonal cost");
        return 0.0;
    }
    return solve_transport(supply, demand, cost).cost;
}

double wasserstein1(const DiscreteDistribution& p, const DiscreteDistribution& q, const GroundMetric& g) {
    require(p.support_size() == g.size() && q.support_size() == g.size(),
            "wasserstein1: support sizes do not match the ground metric");
    return transport_cost(p.probs(), q.probs(), g.matrix());
}

double wasserstein1_dual_check(const DiscreteDistribution& p, const DiscreteDistribution& q, const GroundMetric& g,
                               std::span<const double> f) {
    const int n = g.size();
    require(p.support_size() == n && q.support_size() == n && static_cast<int>(f.size()) == n,
            "wasserstein1_dual_check: dimension mismatch");
    for (int i = 0; i < n; ++i) {
        require(std::isfinite(f[i]), "wasserstein1_dual_check: witness must be finite");
        for (int j = 0; j < n; ++j)
            require(std::abs(f[i] - f[j]) <= g(i, j) + 1e-12, "wasserstein1_dual_check: witness is not 1-Lipschitz");
    }
    double ep = 0.0;
    double eq = 0.0;
    for (int i = 0; i < n; ++i) {
        ep += p[i] * f[i];
        eq += q[i] * f[i];
    }
    return std::abs(ep - eq);
}

double wasserstein2_gaussian(const DiagonalGaussian& a, const DiagonalGaussian& b) {
    require(a.dim() == b.dim(), "wasserstein2_gaussian: dimension mismatch");
    const double mean_term = (a.mean - b.mean).squaredNorm();
    const double sigma_term = (a.variance.cwiseSqrt() - b.variance.cwiseSqrt()).squaredNorm();
    return std::sqrt(mean_term + sigma_term);
}

}  // namespace hipbmdp
