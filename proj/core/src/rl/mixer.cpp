#include "marca/rl/mixer.hpp"

#include <cmath>

#include "marca/nn/layers.hpp"

namespace marca::rl {

using nn::Tensor;

std::string to_string(MixTransform t) {
  return t == MixTransform::softplus ? "softplus" : "abs";
}

MixTransform mix_transform_from_string(const std::string& s) {
  if (s == "softplus") return MixTransform::softplus;
  if (s == "abs") return MixTransform::abs_value;
  fail("unknown mix transform: " + s);
}

namespace {
double apply_transform(MixTransform t, double x) {
  return t == MixTransform::softplus ? nn::softplus(x) : std::fabs(x);
}
double transform_derivative(MixTransform t, double x) {
  if (t == MixTransform::softplus) return nn::sigmoid(x);
  return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
}
}  // namespace

Hypernet::Hypernet(std::size_t n_agents, std::size_t state_dim, const MixerConfig& cfg,
                   std::uint64_t seed)
    : n_agents_(n_agents), cfg_(cfg) {
  require(n_agents >= 1 && state_dim >= 1, "Hypernet: bad dimensions");
  raw_dim_ = n_agents * cfg.mix_hidden + cfg.mix_hidden + cfg.mix_hidden + 1;
  net_ = nn::Mlp({state_dim, cfg.hypernet_hidden, raw_dim_}, seed);
}

Tensor Hypernet::forward_raw(const Tensor& states, nn::MlpCache* cache, Rng* dropout_rng,
                             double dropout_rate) const {
  require(states.cols() == net_.in_dim(), "Hypernet: state dim " + std::to_string(states.cols()) +
                                              " != expected " + std::to_string(net_.in_dim()));
  return net_.forward(states, cache, dropout_rng, dropout_rate);
}

MixerWeights Hypernet::weights_from_raw(std::span<const double> raw_row) const {
  require(raw_row.size() == raw_dim_, "Hypernet: raw row size mismatch");
  const std::size_t H = cfg_.mix_hidden, n = n_agents_;
  MixerWeights w;
  w.n_agents = n;
  w.hidden = H;
  w.w1.resize(n * H);
  w.b1.resize(H);
  w.w2.resize(H);
  for (std::size_t i = 0; i < n * H; ++i) w.w1[i] = apply_transform(cfg_.transform, raw_row[i]);
  for (std::size_t h = 0; h < H; ++h) w.b1[h] = raw_row[n * H + h];
  for (std::size_t h = 0; h < H; ++h)
    w.w2[h] = apply_transform(cfg_.transform, raw_row[n * H + H + h]);
  w.b2 = raw_row[n * H + 2 * H];
  return w;
}

MixerWeights Hypernet::weights_for_state(std::span<const double> state) const {
  Tensor s{{1, state.size()}, std::vector<double>(state.begin(), state.end())};
  Tensor raw = forward_raw(s);
  return weights_from_raw(raw.data);
}

double mix_value(const MixerWeights& w, std::span<const double> agent_qs) {
  require(agent_qs.size() == w.n_agents, "mix_value: agent count mismatch");
  double out = w.b2;
  for (std::size_t h = 0; h < w.hidden; ++h) {
    double pre = w.b1[h];
    for (std::size_t g = 0; g < w.n_agents; ++g) pre += agent_qs[g] * w.w1[g * w.hidden + h];
    out += (pre > 0.0 ? pre : 0.0) * w.w2[h];
  }
  return out;
}

std::vector<double> mix_batch(const Hypernet& h, const Tensor& states, const Tensor& agent_qs,
                              MixBatchCache* cache, Rng* dropout_rng, double dropout_rate) {
  const std::size_t N = states.rows();
  require(agent_qs.rows() == N && agent_qs.cols() == h.n_agents(),
          "mix_batch: agent-Q shape mismatch");
  const std::size_t H = h.config().mix_hidden, n = h.n_agents();
  Tensor raw = h.forward_raw(states, cache ? &cache->hyper_cache : nullptr, dropout_rng,
                             dropout_rate);
  Tensor hidden_pre = Tensor::matrix(N, H);
  std::vector<double> q_tot(N, 0.0);
  const MixTransform tf = h.config().transform;
  for (std::size_t i = 0; i < N; ++i) {
    const double* rr = &raw.data[i * h.raw_dim()];
    double out = rr[n * H + 2 * H];  // b2
    for (std::size_t hh = 0; hh < H; ++hh) {
      double pre = rr[n * H + hh];  // b1
      for (std::size_t g = 0; g < n; ++g)
        pre += agent_qs.at(i, g) * apply_transform(tf, rr[g * H + hh]);
      hidden_pre.at(i, hh) = pre;
      out += (pre > 0.0 ? pre : 0.0) * apply_transform(tf, rr[n * H + H + hh]);
    }
    q_tot[i] = out;
  }
  if (cache) {
    cache->raw = std::move(raw);
    cache->hidden_pre = std::move(hidden_pre);
  }
  return q_tot;
}

void mix_batch_backward(const Hypernet& h, const MixBatchCache& cache, const Tensor& agent_qs,
                        std::span<const double> d_qtot, nn::Mlp& hyper_grads,
                        Tensor* d_agent_qs) {
  const std::size_t N = agent_qs.rows();
  require(d_qtot.size() == N, "mix_batch_backward: d_qtot size mismatch");
  const std::size_t H = h.config().mix_hidden, n = h.n_agents();
  const MixTransform tf = h.config().transform;
  Tensor draw = Tensor::matrix(N, h.raw_dim());
  if (d_agent_qs) *d_agent_qs = Tensor::matrix(N, n);
  for (std::size_t i = 0; i < N; ++i) {
    const double d = d_qtot[i];
    if (d == 0.0) continue;
    const double* rr = &cache.raw.data[i * h.raw_dim()];
    double* dr = &draw.data[i * h.raw_dim()];
    dr[n * H + 2 * H] = d;  // b2
    for (std::size_t hh = 0; hh < H; ++hh) {
      const double pre = cache.hidden_pre.at(i, hh);
      const double hid = pre > 0.0 ? pre : 0.0;
      const double raw_w2 = rr[n * H + H + hh];
      // w2 path
      dr[n * H + H + hh] = d * hid * transform_derivative(tf, raw_w2);
      if (pre <= 0.0) continue;
      const double dpre = d * apply_transform(tf, raw_w2);
      dr[n * H + hh] = dpre;  // b1
      for (std::size_t g = 0; g < n; ++g) {
        const double raw_w1 = rr[g * H + hh];
        dr[g * H + hh] += dpre * agent_qs.at(i, g) * transform_derivative(tf, raw_w1);
        if (d_agent_qs) d_agent_qs->at(i, g) += dpre * apply_transform(tf, raw_w1);
      }
    }
  }
  h.net().backward(draw, cache.hyper_cache, hyper_grads);
}

std::array<double, env::kNumStages> vgca_weights(const env::Env& env, const env::LoggedDataset& ds,
                                                 const std::vector<std::size_t>& idx) {
  require(!idx.empty(), "vgca_weights: empty episode set");
  std::array<double, env::kNumStages> w{};
  for (int t = 0; t < env::kNumStages; ++t) {
    const int n_actions = env.actions().count(t);
    std::vector<double> sum(static_cast<std::size_t>(n_actions), 0.0);
    std::vector<long> cnt(static_cast<std::size_t>(n_actions), 0);
    for (std::size_t i : idx) {
      const int a = ds.episodes[i].actions[static_cast<std::size_t>(t)];
      sum[static_cast<std::size_t>(a)] += ds.episodes[i].reward;
      cnt[static_cast<std::size_t>(a)] += 1;
    }
    for (int j = 0; j < n_actions; ++j) {
      if (cnt[static_cast<std::size_t>(j)] == 0)
        fail("vgca_weights: action " + std::to_string(j) + " at step " + std::to_string(t) +
             " has zero occurrences; dataset violates the support invariant");
    }
    // population variance over the per-action conditional means, unweighted
    double mean_of_means = 0.0;
    std::vector<double> means(static_cast<std::size_t>(n_actions));
    for (int j = 0; j < n_actions; ++j) {
      means[static_cast<std::size_t>(j)] =
          sum[static_cast<std::size_t>(j)] / static_cast<double>(cnt[static_cast<std::size_t>(j)]);
      mean_of_means += means[static_cast<std::size_t>(j)];
    }
    mean_of_means /= n_actions;
    double var = 0.0;
    for (int j = 0; j < n_actions; ++j) {
      const double d = means[static_cast<std::size_t>(j)] - mean_of_means;
      var += d * d;
    }
    w[static_cast<std::size_t>(t)] = var / n_actions;
  }
  return w;
}

}  // namespace marca::rl
