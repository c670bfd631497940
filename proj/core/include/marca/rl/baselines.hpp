#pragma once

// Reference learners: DQN, DDQN, DRQN, Averaged Ensemble-DQN and REM on
// the flattened joint action space; VDN, QMIX and Weighted QMIX as
// value-decomposition baselines with per-agent feed-forward networks.
// All consume the same LoggedDataset and expose the same joint-Q surface
// as the AWRQ-Mixer for evaluation.

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
#include "marca/rl/trainer.hpp"

namespace marca::rl {

enum class Method { dqn, ddqn, drqn, avg_ensemble, rem, vdn, qmix, weighted_qmix };

std::string to_string(Method m);
Method method_from_string(const std::string& s);
bool is_multi_agent(Method m);

struct BaselineConfig {
  Method method = Method::dqn;
  int iterations = 2500;
  int batch_size = 64;
  double lr = 0.01;
  double gamma = 0.9;
  int ensemble_size = 5;  // avg_ensemble / rem heads
  std::size_t gru_hidden = 32;
  std::vector<std::size_t> mlp_hidden{64, 32};
  std::size_t mix_hidden = 32;
  std::size_t hypernet_hidden = 64;
  int target_sync_every = 100;
  double wqmix_alpha = 0.75;  // weight on overestimated samples
  int flattened_cap = 4096;   // reject joint spaces larger than this
  std::uint64_t seed = 0;
  int eval_every = 100;
  int checkpoint_every = 1000;

  std::string to_json() const;
  static BaselineConfig from_json(const std::string& text);
  std::uint64_t content_hash() const;
};

struct BaselineModel {
  BaselineConfig cfg;

  // single-agent family: K heads over the flattened joint space
  bool recurrent = false;
  std::vector<QHead> sa_rec_heads, sa_rec_targets;
  std::vector<nn::Mlp> sa_ff_heads, sa_ff_targets;

  // multi-agent family: per-agent feed-forward utilities (+ mixer for QMIX)
  std::vector<nn::Mlp> ma_agents, ma_targets;
  Hypernet ma_hyper, ma_hyper_target;

  std::vector<double> joint_q(const env::Env& e, const env::RequestContext& s) const;

  nn::Checkpoint to_checkpoint() const;
  static BaselineModel from_checkpoint(const nn::Checkpoint& c, const env::Env& e);

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t k = 0; k < sa_rec_heads.size(); ++k)
      sa_rec_heads[k].visit(prefix + ".h" + std::to_string(k), f);
    for (std::size_t k = 0; k < sa_rec_targets.size(); ++k)
      sa_rec_targets[k].visit(prefix + ".t" + std::to_string(k), f);
    for (std::size_t k = 0; k < sa_ff_heads.size(); ++k)
      sa_ff_heads[k].visit(prefix + ".h" + std::to_string(k), f);
    for (std::size_t k = 0; k < sa_ff_targets.size(); ++k)
      sa_ff_targets[k].visit(prefix + ".t" + std::to_string(k), f);
    for (std::size_t g = 0; g < ma_agents.size(); ++g)
      ma_agents[g].visit(prefix + ".a" + std::to_string(g), f);
    for (std::size_t g = 0; g < ma_targets.size(); ++g)
      ma_targets[g].visit(prefix + ".ta" + std::to_string(g), f);
    if (is_multi_agent(cfg.method) &&
        (cfg.method == Method::qmix || cfg.method == Method::weighted_qmix)) {
      ma_hyper.visit(prefix + ".mix", f);
      ma_hyper_target.visit(prefix + ".tmix", f);
    }
  }

  template <class F>
  void visit_online(const std::string& prefix, F&& f) {
    for (std::size_t k = 0; k < sa_rec_heads.size(); ++k)
      sa_rec_heads[k].visit(prefix + ".h" + std::to_string(k), f);
    for (std::size_t k = 0; k < sa_ff_heads.size(); ++k)
      sa_ff_heads[k].visit(prefix + ".h" + std::to_string(k), f);
    for (std::size_t g = 0; g < ma_agents.size(); ++g)
      ma_agents[g].visit(prefix + ".a" + std::to_string(g), f);
    if (cfg.method == Method::qmix || cfg.method == Method::weighted_qmix)
      ma_hyper.visit(prefix + ".mix", f);
  }
};

class BaselineTrainer {
 public:
  BaselineTrainer(const env::Env& e, const env::LoggedDataset& ds, const BaselineConfig& cfg);
  BaselineTrainer(const env::Env& e, const env::LoggedDataset& ds,
                  const std::filesystem::path& checkpoint_path);

  void set_eval_fn(std::function<double(const BaselineModel&)> fn) { eval_fn_ = std::move(fn); }
  void set_checkpoint_dir(const std::filesystem::path& dir) { checkpoint_dir_ = dir; }

  struct Result {
    BaselineModel model;
    std::vector<double> grad_norms;
    std::vector<ValPoint> val_curve;
    std::string train_log_csv;
    std::string val_log_csv;
    std::string timing_csv;
  };

  Result train();

  std::int64_t iter() const { return iter_; }
  const BaselineModel& model() const { return model_; }

 private:
  void init_fresh();
  void restore(const nn::Checkpoint& c);
  nn::Checkpoint snapshot() const;
  void build_tensors();
  void run_iteration_single();
  void run_iteration_multi();
  void log_row(double loss, double grad_norm, double wall_ms);

  const env::Env& env_;
  const env::LoggedDataset& ds_;
  BaselineConfig cfg_;
  BaselineModel model_;

  std::vector<std::size_t> train_idx_;
  std::vector<nn::Tensor> states_;  // states_[t]: [n × state_dim], t = 0..T (T = terminal)
  std::vector<nn::Tensor> obs_;     // obs_[g]: [n × obs_dim]
  std::vector<int> flat_actions_;
  std::vector<std::vector<int>> step_actions_;
  std::vector<double> rewards_;

  nn::AdamOptimizer opt_;
  std::vector<QHead> rec_grads_;
  std::vector<nn::Mlp> ff_grads_;
  std::vector<nn::Mlp> ma_grads_;
  nn::Mlp hyper_grads_;

  Rng batch_rng_{0};
  Rng mix_rng_{0};  // REM convex mixtures
  std::int64_t iter_ = 0;

  std::function<double(const BaselineModel&)> eval_fn_;
  std::optional<std::filesystem::path> checkpoint_dir_;

  std::vector<double> grad_norms_;
  std::vector<ValPoint> val_curve_;
  std::string train_log_;
  std::string val_log_;
  std::string timing_log_;

  void maybe_eval(bool force);
};

}  // namespace marca::rl
