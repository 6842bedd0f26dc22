#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace hipbmdp {

/// Probability vector: nonnegative, sums to 1 within 1e-12.
class DiscreteDistribution {
public:
    explicit DiscreteDistribution(std::vector<double> probs);

    static DiscreteDistribution point_mass(int size, int index);
    static DiscreteDistribution uniform(int size);

    int support_size() const { return static_cast<int>(probs_.size()); }
    std::span<const double> probs() const { return probs_; }
    double operator[](int i) const { return probs_[i]; }

    friend bool operator==(const DiscreteDistribution&, const DiscreteDistribution&) = default;

private:
    std::vector<double> probs_;
};

/// Symmetric, nonnegative cost matrix with zero diagonal. The triangle
/// inequality is checked (within 1e-9) only when requested.
class GroundMetric {
public:
    explicit GroundMetric(Eigen::MatrixXd distances, bool check_triangle = false);

    /// d(i, j) = 1 for i != j.
    static GroundMetric discrete(int size);
    /// d(i, j) = |i - j|.
    static GroundMetric line(int size);
    /// d(i, j) = ||f_i - f_j||_1 over the columns of `features`.
    static GroundMetric l1_features(const Eigen::MatrixXd& features);

    int size() const { return static_cast<int>(d_.rows()); }
    double operator()(int i, int j) const { return d_(i, j); }
    const Eigen::MatrixXd& matrix() const { return d_; }

private:
    Eigen::MatrixXd d_;
};

struct DiagonalGaussian {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;

    DiagonalGaussian(Eigen::VectorXd mean, Eigen::VectorXd variance);
    int dim() const { return static_cast<int>(mean.size()); }
};

struct TransportSolution {
    double cost = 0.0;
    /// plan(i, j) = mass moved from supply i to demand j.
    Eigen::MatrixXd plan;
    /// Dual potentials: cost(i,j) >= demand_potential(j) - supply_potential(i),
    /// with equality on every arc that carries flow.
    Eigen::VectorXd supply_potential;
    Eigen::VectorXd demand_potential;
};

/// Exact balanced transportation problem by successive shortest paths with
/// Dijkstra over reduced costs. Costs must be finite and nonnegative.
TransportSolution solve_transport(std::span<const double> supply, std::span<const double> demand,
                                  const Eigen::MatrixXd& cost);

/// Transport cost only; returns exactly 0 when the two vectors are identical.
double transport_cost(std::span<const double> supply, std::span<const double> demand,
                      const Eigen::MatrixXd& cost);

double wasserstein1(const DiscreteDistribution& p, const DiscreteDistribution& q, const GroundMetric& g);

/// |E_p f - E_q f| for a witness f that must be 1-Lipschitz under g.
double wasserstein1_dual_check(const DiscreteDistribution& p, const DiscreteDistribution& q,
                               const GroundMetric& g, std::span<const double> f);

/// sqrt(||m1 - m2||^2 + sum_i (sigma1_i - sigma2_i)^2) for diagonal covariances.
double wasserstein2_gaussian(const DiagonalGaussian& a, const DiagonalGaussian& b);

}  // namespace hipbmdp
