#pragma once

// Adam with bias correction. One AdamState per parameter array; the
// optimizer bundles states for a model's full parameter list.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace marca::nn {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::int64_t step = 0;
  std::vector<double> m, v;

  static AdamState init(const AdamConfig& cfg, std::size_t n);
};

// Standard Adam update; rejects non-finite gradients so a diverged step
// never corrupts parameters.
void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state);

// (name, values*) pairs; params and grads must visit in identical order
using ParamRefs = std::vector<std::pair<std::string, std::vector<double>*>>;

class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(const AdamConfig& cfg, const ParamRefs& params);

  void step(const ParamRefs& params, const ParamRefs& grads);

  std::int64_t steps_taken() const { return slots_.empty() ? 0 : slots_[0].step; }
  std::vector<AdamState>& slots() { return slots_; }
  const std::vector<AdamState>& slots() const { return slots_; }

 private:
  std::vector<AdamState> slots_;
};

void zero_grads(const ParamRefs& grads);

}  // namespace marca::nn
