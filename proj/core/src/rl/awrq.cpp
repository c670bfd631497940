#include "marca/rl/awrq.hpp"

#include <cmath>

namespace marca::rl {

using nn::Tensor;

QHead QHead::make(std::size_t obs_dim, std::size_t n_actions, const AwrqConfig& cfg,
                  std::uint64_t seed) {
  QHead h;
  h.gru = nn::GruParams::glorot(obs_dim, cfg.gru_hidden, derive_seed(seed, "gru"));
  std::vector<std::size_t> sizes{cfg.gru_hidden};
  for (std::size_t s : cfg.mlp_hidden) sizes.push_back(s);
  sizes.push_back(n_actions);
  h.mlp = nn::Mlp(sizes, derive_seed(seed, "mlp"));
  return h;
}

QHead QHead::grads_like() const {
  QHead g;
  g.gru = nn::GruParams::zeros(gru.in, gru.hidden);
  g.mlp = mlp.grads_like();
  return g;
}

Tensor qhead_forward(const QHead& head, std::span<const Tensor> obs_seq, QHeadCache* cache,
                     Rng* dropout_rng, double dropout_rate) {
  require(!obs_seq.empty(), "qhead_forward: empty observation sequence");
  const std::size_t n = obs_seq[0].rows();
  Tensor h = Tensor::matrix(n, head.gru.hidden);
  if (cache) cache->gru_steps.assign(obs_seq.size(), {});
  for (std::size_t t = 0; t < obs_seq.size(); ++t) {
    h = gru_step(obs_seq[t], h, head.gru, cache ? &cache->gru_steps[t] : nullptr);
  }
  return head.mlp.forward(h, cache ? &cache->mlp : nullptr, dropout_rng, dropout_rate);
}

void qhead_backward(const QHead& head, const Tensor& dq, const QHeadCache& cache, QHead& grads) {
  Tensor dh = head.mlp.backward(dq, cache.mlp, grads.mlp);
  for (std::size_t t = cache.gru_steps.size(); t-- > 0;) {
    auto res = gru_backward(dh, head.gru, cache.gru_steps[t], grads.gru);
    dh = std::move(res.dh_prev);
  }
}

HeadWeights adaptive_weights(std::span<const double> losses) {
  require(!losses.empty(), "adaptive_weights: no losses");
  double sum = 0.0;
  for (double l : losses) {
    require(l >= 0.0, "adaptive_weights: negative loss");
    sum += l;
  }
  HeadWeights w;
  const std::size_t k = losses.size();
  if (sum <= 0.0) {
    // Eq. is 0/0 here; uniform is the symmetric completion
    w.eta.assign(k, 1.0 / static_cast<double>(k));
    return w;
  }
  w.eta.resize(k);
  for (std::size_t i = 0; i < k; ++i) w.eta[i] = losses[i] / sum;
  return w;
}

double head_td_loss(double r, double gamma, double q_next_target, double q_current,
                    bool terminal) {
  require(std::isfinite(r) && std::isfinite(q_next_target) && std::isfinite(q_current),
          "head_td_loss: non-finite input");
  const double target = terminal ? r : r + gamma * q_next_target;
  const double err = target - q_current;
  return err * err;
}

double agent_q(std::span<const double> head_q_values, const HeadWeights& w) {
  require(head_q_values.size() == w.eta.size(), "agent_q: K mismatch");
  double q = 0.0;
  for (std::size_t k = 0; k < w.eta.size(); ++k) q += w.eta[k] * head_q_values[k];
  return q;
}

int argmax_lowest(std::span<const double> values) {
  require(!values.empty(), "argmax_lowest: empty values");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return static_cast<int>(best);
}

int epsilon_greedy(std::span<const double> q_values, double epsilon, Rng& rng) {
  require(!q_values.empty(), "epsilon_greedy: empty action set");
  require(epsilon >= 0.0 && epsilon <= 1.0, "epsilon_greedy: epsilon must be in [0,1]");
  if (epsilon > 0.0 && rng.uniform() < epsilon)
    return static_cast<int>(rng.uniform_index(q_values.size()));
  return argmax_lowest(q_values);
}

QEnsemble::QEnsemble(int agent_index, std::size_t obs_dim, std::size_t n_actions,
                     const AwrqConfig& cfg, std::uint64_t seed)
    : agent_index_(agent_index), n_actions_(n_actions), cfg_(cfg) {
  require(cfg.ensemble_size >= 1, "QEnsemble: K must be >= 1");
  heads_.reserve(static_cast<std::size_t>(cfg.ensemble_size));
  for (int k = 0; k < cfg.ensemble_size; ++k)
    heads_.push_back(QHead::make(obs_dim, n_actions, cfg, derive_seed(seed, static_cast<std::uint64_t>(k))));
  target_heads_ = heads_;
}

std::vector<Tensor> QEnsemble::forward_all(std::span<const Tensor> obs_seq) const {
  std::vector<Tensor> out;
  out.reserve(heads_.size());
  for (const auto& h : heads_) out.push_back(qhead_forward(h, obs_seq));
  return out;
}

std::vector<Tensor> QEnsemble::forward_all_target(std::span<const Tensor> obs_seq) const {
  std::vector<Tensor> out;
  out.reserve(target_heads_.size());
  for (const auto& h : target_heads_) out.push_back(qhead_forward(h, obs_seq));
  return out;
}

Tensor QEnsemble::serve_q(std::span<const Tensor> obs_seq) const {
  auto qs = forward_all(obs_seq);
  Tensor mean = qs[0];
  for (std::size_t k = 1; k < qs.size(); ++k) add_inplace(mean, qs[k]);
  scale_inplace(mean, 1.0 / static_cast<double>(qs.size()));
  return mean;
}

bool QEnsemble::sync_targets(std::int64_t iter) {
  require(cfg_.target_sync_every >= 1, "sync_targets: τ must be >= 1");
  if (iter % cfg_.target_sync_every != 0) return false;
  force_sync();
  return true;
}

void QEnsemble::force_sync() { target_heads_ = heads_; }

}  // namespace marca::rl
