#pragma once

// Evaluation metrics: Spearman rank correlation with average ranks for
// ties, convergence steps against the final validation value, windowed
// gradient variance, and per-seed report aggregation.

#include <span>
#include <string>
#include <vector>

namespace marca::metrics {

// Pearson correlation of average-rank vectors; rejects constant inputs
double spearman_rs(std::span<const double> x, std::span<const double> y);

std::vector<double> average_ranks(std::span<const double> v);

struct ConvergenceResult {
  double steps = 0.0;
  bool reached = false;  // threshold never crossed → steps is the final sample
};

// first env-step count where the curve reaches 95% of its final value,
// with linear interpolation between samples
ConvergenceResult convergence_steps(std::span<const double> env_steps,
                                    std::span<const double> values, double fraction = 0.95);

// population variance within each length-`window` sliding window (stride 1),
// averaged over windows
double gradient_variance(std::span<const double> norms, std::size_t window);

struct MetricReport {
  std::string name;
  std::vector<double> per_seed;
  double mean = 0.0;
  double dispersion = 0.0;  // sample standard deviation across seeds
};

MetricReport aggregate(const std::string& name, std::vector<double> per_seed);

}  // namespace marca::metrics
