#include "marca/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "marca/common.hpp"

namespace marca::metrics {

std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman_rs(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "spearman_rs: length mismatch");
  require(x.size() >= 2, "spearman_rs: need at least 2 samples");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = rx[i] - mx, dy = ry[i] - my;
    cov += dx * dy;
    vx += dx * dx;
    vy += dy * dy;
  }
  require(vx > 0.0 && vy > 0.0, "spearman_rs: constant input after ranking");
  return cov / std::sqrt(vx * vy);
}

ConvergenceResult convergence_steps(std::span<const double> env_steps,
                                    std::span<const double> values, double fraction) {
  require(!values.empty() && env_steps.size() == values.size(),
          "convergence_steps: empty or mismatched curve");
  const double target = fraction * values.back();
  ConvergenceResult res;
  if (values.front() >= target) {
    res.steps = env_steps.front();
    res.reached = true;
    return res;
  }
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] >= target) {
      const double v0 = values[i - 1], v1 = values[i];
      const double t = v1 == v0 ? 1.0 : (target - v0) / (v1 - v0);
      res.steps = env_steps[i - 1] + t * (env_steps[i] - env_steps[i - 1]);
      res.reached = true;
      return res;
    }
  }
  res.steps = env_steps.back();
  res.reached = false;
  return res;
}

double gradient_variance(std::span<const double> norms, std::size_t window) {
  require(window >= 1, "gradient_variance: window must be >= 1");
  require(norms.size() >= window, "gradient_variance: need at least `window` updates");
  const std::size_t n_windows = norms.size() - window + 1;
  const double w = static_cast<double>(window);
  double acc = 0.0;
  for (std::size_t start = 0; start < n_windows; ++start) {
    double mean = 0.0;
    for (std::size_t i = 0; i < window; ++i) mean += norms[start + i];
    mean /= w;
    double var = 0.0;
    for (std::size_t i = 0; i < window; ++i) {
      const double d = norms[start + i] - mean;
      var += d * d;
    }
    acc += var / w;
  }
  return acc / static_cast<double>(n_windows);
}

MetricReport aggregate(const std::string& name, std::vector<double> per_seed) {
  require(!per_seed.empty(), "aggregate: no per-seed values");
  MetricReport r;
  r.name = name;
  r.per_seed = std::move(per_seed);
  for (double v : r.per_seed) r.mean += v;
  r.mean /= static_cast<double>(r.per_seed.size());
  if (r.per_seed.size() > 1) {
    double acc = 0.0;
    for (double v : r.per_seed) acc += (v - r.mean) * (v - r.mean);
    r.dispersion = std::sqrt(acc / static_cast<double>(r.per_seed.size() - 1));
  }
  return r;
}

}  // namespace marca::metrics
