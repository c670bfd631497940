#pragma once

// State-conditioned hypernetwork and monotone mixing network. Softplus on
// the generated weight matrices keeps Q_tot non-decreasing in every
// agent's value; the absolute-value transform is kept for the QMIX
// baseline and the monotonicity-constraint ablation.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "marca/env/dataset.hpp"
#include "marca/nn/mlp.hpp"

namespace marca::rl {

enum class MixTransform { softplus, abs_value };

std::string to_string(MixTransform t);
MixTransform mix_transform_from_string(const std::string& s);

struct MixerConfig {
  std::size_t mix_hidden = 32;       // H_mix
  std::size_t hypernet_hidden = 64;  // hidden width of h_ψ
  MixTransform transform = MixTransform::softplus;
};

// mixing weights generated for one state, after the non-negativity transform
struct MixerWeights {
  std::size_t n_agents = 0, hidden = 0;
  std::vector<double> w1;  // [n_agents × H]
  std::vector<double> b1;  // [H]
  std::vector<double> w2;  // [H]
  double b2 = 0.0;
};

class Hypernet {
 public:
  Hypernet() = default;
  Hypernet(std::size_t n_agents, std::size_t state_dim, const MixerConfig& cfg,
           std::uint64_t seed);

  std::size_t n_agents() const { return n_agents_; }
  std::size_t state_dim() const { return net_.in_dim(); }
  std::size_t raw_dim() const { return raw_dim_; }
  const MixerConfig& config() const { return cfg_; }

  nn::Tensor forward_raw(const nn::Tensor& states, nn::MlpCache* cache = nullptr,
                         Rng* dropout_rng = nullptr, double dropout_rate = 0.0) const;

  MixerWeights weights_from_raw(std::span<const double> raw_row) const;
  MixerWeights weights_for_state(std::span<const double> state) const;

  nn::Mlp& net() { return net_; }
  const nn::Mlp& net() const { return net_; }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    net_.visit(prefix + ".hypernet", f);
  }

 private:
  std::size_t n_agents_ = 0;
  std::size_t raw_dim_ = 0;
  MixerConfig cfg_;
  nn::Mlp net_;
};

// Q_tot = ReLU([Q_1..Q_n]·W1 + b1)·W2 + b2 from exported weights
double mix_value(const MixerWeights& w, std::span<const double> agent_qs);

struct MixBatchCache {
  nn::Tensor raw;         // [N × raw_dim]
  nn::Tensor hidden_pre;  // [N × H]
  nn::MlpCache hyper_cache;
};

// batched Q_tot over (states, agent-Q rows); cache enables backward
std::vector<double> mix_batch(const Hypernet& h, const nn::Tensor& states,
                              const nn::Tensor& agent_qs, MixBatchCache* cache = nullptr,
                              Rng* dropout_rng = nullptr, double dropout_rate = 0.0);

// dL/dQ_tot per sample → hypernet gradients; when d_agent_qs is non-null
// the gradient through the mixing inputs is produced as well (used by the
// end-to-end baselines; the AWRQ trainer leaves agent values detached)
void mix_batch_backward(const Hypernet& h, const MixBatchCache& cache, const nn::Tensor& agent_qs,
                        std::span<const double> d_qtot, nn::Mlp& hyper_grads,
                        nn::Tensor* d_agent_qs = nullptr);

// --- Variance-Guided Credit Assignment -----------------------------------
// w_t = Var over actions j of E[R | a_t = j], per step index; every step-t
// action must occur at least once in the given episodes
std::array<double, env::kNumStages> vgca_weights(const env::Env& env,
                                                 const env::LoggedDataset& ds,
                                                 const std::vector<std::size_t>& idx);

}  // namespace marca::rl
