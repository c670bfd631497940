#pragma once

// Offline CTDE training loop: per-step per-agent ensemble updates with
// VGCA-scaled rewards and adaptive head weighting, followed by one
// hypernetwork/mixer update per iteration against the raw terminal
// reward. Checkpoints carry parameters, optimizer moments, RNG streams
// and logs so an interrupted run resumes bit-exactly.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "marca/env/dataset.hpp"
#include "marca/nn/checkpoint.hpp"
#include "marca/rl/awrq.hpp"
#include "marca/rl/mixer.hpp"

namespace marca::rl {

struct TrainerConfig {
  int iterations = 2500;
  int batch_size = 64;
  double lr = 0.01;
  AwrqConfig awrq;
  MixerConfig mixer;
  bool adaptive_weighting = true;  // false → "w/o AW": η fixed uniform
  bool vgca = true;                // false → "w/o VGCA": w_t ≡ 1
  bool sarsa_targets = true;       // false → max-over-actions bootstrap
  std::uint64_t seed = 0;
  int eval_every = 100;
  int checkpoint_every = 1000;
  int grad_variance_window = 200;

  std::string to_json() const;
  static TrainerConfig from_json(const std::string& text);
  std::uint64_t content_hash() const;
};

struct MixerModel {
  std::vector<QEnsemble> agents;
  Hypernet hypernet;
  Hypernet target_hypernet;
  TrainerConfig cfg;

  // Q̂(s,·) over the flat joint-action space: per-agent uniform-mean serve
  // values mixed with state-conditioned monotone weights
  std::vector<double> joint_q(const env::Env& e, const env::RequestContext& s) const;
  double q_tot_for(const env::Env& e, const env::RequestContext& s,
                   const env::JointAction& a) const;

  nn::Checkpoint to_checkpoint() const;
  static MixerModel from_checkpoint(const nn::Checkpoint& c, const env::Env& e);
};

struct ValPoint {
  double env_steps = 0.0;
  double value = 0.0;
};

struct TrainResult {
  MixerModel model;
  std::vector<double> grad_norms;  // per-update ‖∇ψ L_tot‖₂
  std::vector<ValPoint> val_curve;
  std::string train_log_csv;
  std::string val_log_csv;
  std::string timing_csv;  // wall time sidecar; intentionally not hashed
  std::int64_t iterations_run = 0;
};

class MixerTrainer {
 public:
  MixerTrainer(const env::Env& e, const env::LoggedDataset& ds, const TrainerConfig& cfg);

  // resume from a mid-run checkpoint; env/dataset must hash-match
  MixerTrainer(const env::Env& e, const env::LoggedDataset& ds,
               const std::filesystem::path& checkpoint_path);

  // deterministic validation metric, called every eval_every iterations
  void set_eval_fn(std::function<double(const MixerModel&)> fn) { eval_fn_ = std::move(fn); }

  // periodic checkpoints land here as checkpoint_latest.json when set
  void set_checkpoint_dir(const std::filesystem::path& dir) { checkpoint_dir_ = dir; }

  TrainResult train();

  std::int64_t iter() const { return iter_; }
  const MixerModel& model() const { return model_; }

 private:
  void init_fresh();
  void restore(const nn::Checkpoint& c);
  nn::Checkpoint snapshot() const;
  void build_tensors();
  void run_iteration();
  void maybe_eval(bool force);

  const env::Env& env_;
  const env::LoggedDataset& ds_;
  TrainerConfig cfg_;
  MixerModel model_;

  // flattened train-split tensors
  std::vector<std::size_t> train_idx_;
  std::vector<nn::Tensor> obs_;   // obs_[t]: [n_train × obs_dim]
  nn::Tensor term_state_;         // [n_train × state_dim]
  std::vector<double> rewards_;   // observed R
  std::vector<std::vector<int>> step_actions_;  // [t][i]
  std::array<double, env::kNumStages> vgca_w_{1.0, 1.0, 1.0};

  std::vector<nn::AdamOptimizer> agent_opt_;
  nn::AdamOptimizer hyper_opt_;
  std::vector<QHead> head_grads_;  // scratch, per agent per head
  nn::Mlp hyper_grads_;

  Rng batch_rng_{0};
  Rng dropout_rng_{0};
  std::int64_t iter_ = 0;

  std::function<double(const MixerModel&)> eval_fn_;
  std::optional<std::filesystem::path> checkpoint_dir_;

  std::vector<double> grad_norms_;
  std::vector<ValPoint> val_curve_;
  std::string train_log_;
  std::string val_log_;
  std::string timing_log_;
};

// L_tot on a fixed probe batch in eval mode (serve-path agent values)
double mixer_probe_loss(const env::Env& e, const MixerModel& m, const env::LoggedDataset& ds,
                        const std::vector<std::size_t>& idx);

}  // namespace marca::rl
