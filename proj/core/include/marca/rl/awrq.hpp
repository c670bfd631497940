#pragma once

// Adaptive Weighting Recurrent Q: per-agent ensembles of K GRU+MLP heads,
// TD-loss-normalized head weights, target copies with hard sync, and the
// uniform-mean serving path.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "marca/common.hpp"
#include "marca/nn/adam.hpp"
#include "marca/nn/gru.hpp"
#include "marca/nn/mlp.hpp"

namespace marca::rl {

struct AwrqConfig {
  int ensemble_size = 5;  // K
  std::size_t gru_hidden = 32;
  std::vector<std::size_t> mlp_hidden{64, 32};
  double gamma = 0.9;
  int target_sync_every = 100;  // τ
  double epsilon_greedy = 0.05;
  double dropout = 0.2;  // training-time only
};

struct QHead {
  nn::GruParams gru;
  nn::Mlp mlp;  // gru_hidden → mlp_hidden... → |A_g|

  static QHead make(std::size_t obs_dim, std::size_t n_actions, const AwrqConfig& cfg,
                    std::uint64_t seed);
  QHead grads_like() const;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    gru.visit(prefix + ".gru", f);
    mlp.visit(prefix + ".mlp", f);
  }
};

struct QHeadCache {
  std::vector<nn::GruCache> gru_steps;
  nn::MlpCache mlp;
};

// unrolls the head over an observation sequence (fresh zero hidden state)
// and returns Q-values [batch × |A_g|] at the final step
nn::Tensor qhead_forward(const QHead& head, std::span<const nn::Tensor> obs_seq,
                         QHeadCache* cache = nullptr, Rng* dropout_rng = nullptr,
                         double dropout_rate = 0.0);

// dq is dLoss/dQ at the final step; gradients accumulate into `grads`
void qhead_backward(const QHead& head, const nn::Tensor& dq, const QHeadCache& cache,
                    QHead& grads);

struct HeadWeights {
  std::vector<double> eta;  // non-negative, sums to 1
};

// Eq: η_k = L_k / Σ L_k; all-zero losses fall back to uniform 1/K
HeadWeights adaptive_weights(std::span<const double> losses);

// squared TD error; terminal transitions drop the bootstrap term
double head_td_loss(double r, double gamma, double q_next_target, double q_current,
                    bool terminal = false);

// weighted agent value Q_g = Σ_k η_k Q_g^k
double agent_q(std::span<const double> head_q_values, const HeadWeights& w);

// argmax with prob 1-ε, uniform otherwise; argmax ties go to lowest index
int epsilon_greedy(std::span<const double> q_values, double epsilon, Rng& rng);

int argmax_lowest(std::span<const double> values);

class QEnsemble {
 public:
  QEnsemble() = default;
  QEnsemble(int agent_index, std::size_t obs_dim, std::size_t n_actions, const AwrqConfig& cfg,
            std::uint64_t seed);

  int agent_index() const { return agent_index_; }
  int K() const { return static_cast<int>(heads_.size()); }
  std::size_t n_actions() const { return n_actions_; }
  const AwrqConfig& config() const { return cfg_; }

  std::vector<QHead>& heads() { return heads_; }
  const std::vector<QHead>& heads() const { return heads_; }
  std::vector<QHead>& target_heads() { return target_heads_; }
  const std::vector<QHead>& target_heads() const { return target_heads_; }

  // per-head Q rows at the end of the sequence (eval mode, online heads)
  std::vector<nn::Tensor> forward_all(std::span<const nn::Tensor> obs_seq) const;
  std::vector<nn::Tensor> forward_all_target(std::span<const nn::Tensor> obs_seq) const;

  // Algorithm-2 serving path: uniform mean over heads
  nn::Tensor serve_q(std::span<const nn::Tensor> obs_seq) const;

  // hard copy online → target when iter ≡ 0 (mod τ); returns true if synced
  bool sync_targets(std::int64_t iter);
  void force_sync();

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t k = 0; k < heads_.size(); ++k)
      heads_[k].visit(prefix + ".h" + std::to_string(k), f);
    for (std::size_t k = 0; k < target_heads_.size(); ++k)
      target_heads_[k].visit(prefix + ".t" + std::to_string(k), f);
  }

  // online heads only: what the optimizer owns (targets are lagged copies)
  template <class F>
  void visit_online(const std::string& prefix, F&& f) {
    for (std::size_t k = 0; k < heads_.size(); ++k)
      heads_[k].visit(prefix + ".h" + std::to_string(k), f);
  }

 private:
  int agent_index_ = 0;
  std::size_t n_actions_ = 0;
  AwrqConfig cfg_;
  std::vector<QHead> heads_;
  std::vector<QHead> target_heads_;
};

}  // namespace marca::rl
