#pragma once

#include <span>
#include <vector>

namespace hipbmdp {

double mean(std::span<const double> xs);
/// Sample standard deviation over sqrt(n); 0 for fewer than two values.
double standard_error(std::span<const double> xs);
double median(std::vector<double> xs);

/// Ranks starting at 1; tied values share the mean of their ranks.
std::vector<double> average_ranks(std::span<const double> xs);
double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of average ranks. NaN when either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

/// Two-sided 95% normal-approximation half-width for a binomial proportion:
/// 1.96 * sqrt(p (1 - p) / n).
double binomial_ci_half_width(double p, int n);

}  // namespace hipbmdp
