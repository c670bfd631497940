#include "marca/nn/adam.hpp"

#include <algorithm>
#include <cmath>

#include "marca/common.hpp"

namespace marca::nn {

AdamState AdamState::init(const AdamConfig& cfg, std::size_t n) {
  AdamState s;
  s.cfg = cfg;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  return s;
}

void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state) {
  require(params.size() == grads.size() && params.size() == state.m.size(),
          "adam_update: parameter/gradient/moment size mismatch");
  for (double gv : grads) {
    if (!std::isfinite(gv)) fail("adam_update: non-finite gradient, step aborted");
  }
  state.step += 1;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double gv = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * gv;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * gv * gv;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
  }
}

AdamOptimizer::AdamOptimizer(const AdamConfig& cfg, const ParamRefs& params) {
  slots_.reserve(params.size());
  for (const auto& [name, vec] : params) slots_.push_back(AdamState::init(cfg, vec->size()));
}

void AdamOptimizer::step(const ParamRefs& params, const ParamRefs& grads) {
  require(params.size() == grads.size() && params.size() == slots_.size(),
          "AdamOptimizer::step: ref list mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    adam_update(*params[i].second, *grads[i].second, slots_[i]);
}

void zero_grads(const ParamRefs& grads) {
  for (const auto& [name, vec] : grads)
    std::fill(vec->begin(), vec->end(), 0.0);
}

}  // namespace marca::nn
