#pragma once

// Action-result predictor: shared-trunk multi-task regressor mapping
// (request features, joint action) to the realized per-stage result sizes
// that feed the cost estimator.

#include <array>
#include <cstdint>

#include "marca/env/dataset.hpp"
#include "marca/nn/mlp.hpp"

namespace marca::cost {

struct PredictorConfig {
  std::size_t trunk_hidden = 48;
  std::size_t head_hidden = 24;
  int iterations = 1200;
  int batch_size = 64;
  double lr = 0.005;
  std::uint64_t seed = 11;
};

class ActionResultPredictor {
 public:
  ActionResultPredictor() = default;

  void train(const env::Env& env, const env::LoggedDataset& ds, const PredictorConfig& cfg);
  bool trained() const { return trained_; }

  // predicted effective queue length per stage
  std::array<double, env::kNumStages> predict(const env::Env& env, const env::RequestContext& s,
                                              const env::JointAction& a) const;

  // mean squared error on normalized targets over the given episodes
  double mse(const env::Env& env, const env::LoggedDataset& ds,
             const std::vector<std::size_t>& idx) const;
  static double constant_mean_mse(const env::Env& env, const env::LoggedDataset& ds,
                                  const std::vector<std::size_t>& train_idx,
                                  const std::vector<std::size_t>& eval_idx);

 private:
  std::vector<double> encode(const env::Env& env, const env::RequestContext& s,
                             const env::JointAction& a) const;
  static double norm_target(double pool, double ref);
  static double denorm_target(double y, double ref);

  nn::Mlp trunk_;
  std::array<nn::Mlp, env::kNumStages> heads_;
  double pool_ref_ = 300.0;
  bool trained_ = false;
};

}  // namespace marca::cost
