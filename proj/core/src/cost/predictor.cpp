#include "marca/cost/predictor.hpp"

#include <cmath>

#include "marca/nn/adam.hpp"

namespace marca::cost {

using nn::Tensor;

std::vector<double> ActionResultPredictor::encode(const env::Env& env,
                                                  const env::RequestContext& s,
                                                  const env::JointAction& a) const {
  const auto& cfg = env.config();
  std::vector<double> x;
  x.reserve(cfg.feature_dim + 4 + 16);
  for (double f : s.features) x.push_back(f);
  x.push_back(cfg.n_tiers > 1 ? static_cast<double>(s.value_tier) / (cfg.n_tiers - 1) : 0.0);
  x.push_back(cfg.n_platforms > 1 ? static_cast<double>(s.platform_id) / (cfg.n_platforms - 1)
                                  : 0.0);
  const double w = 2.0 * 3.14159265358979323846 * s.timestamp_sec / 86400.0;
  x.push_back(std::sin(w));
  x.push_back(std::cos(w));
  for (int g = 0; g < env::kNumStages; ++g) {
    const int cnt = env.actions().count(g);
    for (int i = 0; i < cnt; ++i)
      x.push_back(i == a[static_cast<std::size_t>(g)] ? 1.0 : 0.0);
  }
  return x;
}

double ActionResultPredictor::norm_target(double pool, double ref) {
  return std::log1p(pool) / std::log1p(ref);
}

double ActionResultPredictor::denorm_target(double y, double ref) {
  return std::max(0.0, std::expm1(y * std::log1p(ref)));
}

void ActionResultPredictor::train(const env::Env& env, const env::LoggedDataset& ds,
                                  const PredictorConfig& cfg) {
  require(!ds.train_idx.empty(), "ActionResultPredictor: empty training split");
  pool_ref_ = 0.0;
  for (double b : env.config().channel_base_counts) pool_ref_ += b * 1.2;

  const std::size_t in_dim =
      encode(env, ds.episodes[ds.train_idx[0]].ctx, ds.episodes[ds.train_idx[0]].actions).size();
  trunk_ = nn::Mlp({in_dim, cfg.trunk_hidden, cfg.head_hidden}, derive_seed(cfg.seed, "trunk"));
  for (int g = 0; g < env::kNumStages; ++g)
    heads_[static_cast<std::size_t>(g)] =
        nn::Mlp({cfg.head_hidden, cfg.head_hidden, 1},
                derive_seed(cfg.seed, "head" + std::to_string(g)));

  nn::Mlp trunk_grads = trunk_.grads_like();
  std::array<nn::Mlp, env::kNumStages> head_grads;
  for (int g = 0; g < env::kNumStages; ++g)
    head_grads[static_cast<std::size_t>(g)] = heads_[static_cast<std::size_t>(g)].grads_like();

  nn::ParamRefs params = trunk_.param_refs("trunk");
  nn::ParamRefs grads = trunk_grads.param_refs("trunk");
  for (int g = 0; g < env::kNumStages; ++g) {
    auto hp = heads_[static_cast<std::size_t>(g)].param_refs("head" + std::to_string(g));
    auto hg = head_grads[static_cast<std::size_t>(g)].param_refs("head" + std::to_string(g));
    params.insert(params.end(), hp.begin(), hp.end());
    grads.insert(grads.end(), hg.begin(), hg.end());
  }
  nn::AdamConfig acfg;
  acfg.lr = cfg.lr;
  nn::AdamOptimizer opt(acfg, params);

  Rng batch_rng(derive_seed(cfg.seed, "batches"));
  const std::size_t n_train = ds.train_idx.size();
  const std::size_t bsz = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n_train);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    Tensor x = Tensor::matrix(bsz, in_dim);
    Tensor targets = Tensor::matrix(bsz, env::kNumStages);
    for (std::size_t b = 0; b < bsz; ++b) {
      const auto& ep = ds.episodes[ds.train_idx[batch_rng.uniform_index(n_train)]];
      auto enc = encode(env, ep.ctx, ep.actions);
      std::copy(enc.begin(), enc.end(), x.data.begin() + static_cast<std::ptrdiff_t>(b * in_dim));
      for (int g = 0; g < env::kNumStages; ++g)
        targets.at(b, static_cast<std::size_t>(g)) =
            norm_target(ep.realized_pool[static_cast<std::size_t>(g)], pool_ref_);
    }

    nn::zero_grads(grads);
    nn::MlpCache trunk_cache;
    Tensor z = trunk_.forward(x, &trunk_cache);
    Tensor dz = Tensor::matrix(bsz, cfg.head_hidden);
    for (int g = 0; g < env::kNumStages; ++g) {
      nn::MlpCache head_cache;
      Tensor y = heads_[static_cast<std::size_t>(g)].forward(z, &head_cache);
      Tensor dy = Tensor::matrix(bsz, 1);
      for (std::size_t b = 0; b < bsz; ++b)
        dy.at(b, 0) = 2.0 * (y.at(b, 0) - targets.at(b, static_cast<std::size_t>(g))) /
                      static_cast<double>(bsz);
      Tensor dzg = heads_[static_cast<std::size_t>(g)].backward(
          dy, head_cache, head_grads[static_cast<std::size_t>(g)]);
      add_inplace(dz, dzg);
    }
    trunk_.backward(dz, trunk_cache, trunk_grads);
    opt.step(params, grads);
  }
  trained_ = true;
}

std::array<double, env::kNumStages> ActionResultPredictor::predict(
    const env::Env& env, const env::RequestContext& s, const env::JointAction& a) const {
  require(trained_, "ActionResultPredictor: predict called before training");
  auto enc = encode(env, s, a);
  Tensor x{{1, enc.size()}, enc};
  Tensor z = trunk_.forward(x);
  std::array<double, env::kNumStages> out{};
  for (int g = 0; g < env::kNumStages; ++g) {
    const double y = heads_[static_cast<std::size_t>(g)].forward(z).data[0];
    out[static_cast<std::size_t>(g)] = denorm_target(y, pool_ref_);
  }
  return out;
}

double ActionResultPredictor::mse(const env::Env& env, const env::LoggedDataset& ds,
                                  const std::vector<std::size_t>& idx) const {
  require(trained_, "ActionResultPredictor: mse called before training");
  require(!idx.empty(), "ActionResultPredictor: empty eval split");
  double acc = 0.0;
  for (std::size_t i : idx) {
    const auto& ep = ds.episodes[i];
    auto enc = encode(env, ep.ctx, ep.actions);
    Tensor x{{1, enc.size()}, enc};
    Tensor z = trunk_.forward(x);
    for (int g = 0; g < env::kNumStages; ++g) {
      const double y = heads_[static_cast<std::size_t>(g)].forward(z).data[0];
      const double t = norm_target(ep.realized_pool[static_cast<std::size_t>(g)], pool_ref_);
      acc += (y - t) * (y - t);
    }
  }
  return acc / (static_cast<double>(idx.size()) * env::kNumStages);
}

double ActionResultPredictor::constant_mean_mse(const env::Env& env, const env::LoggedDataset& ds,
                                                const std::vector<std::size_t>& train_idx,
                                                const std::vector<std::size_t>& eval_idx) {
  require(!train_idx.empty() && !eval_idx.empty(), "constant_mean_mse: empty split");
  double ref = 0.0;
  for (double b : env.config().channel_base_counts) ref += b * 1.2;
  std::array<double, env::kNumStages> mean{};
  for (std::size_t i : train_idx)
    for (int g = 0; g < env::kNumStages; ++g)
      mean[static_cast<std::size_t>(g)] +=
          norm_target(ds.episodes[i].realized_pool[static_cast<std::size_t>(g)], ref);
  for (double& m : mean) m /= static_cast<double>(train_idx.size());
  double acc = 0.0;
  for (std::size_t i : eval_idx)
    for (int g = 0; g < env::kNumStages; ++g) {
      const double t =
          norm_target(ds.episodes[i].realized_pool[static_cast<std::size_t>(g)], ref);
      acc += (t - mean[static_cast<std::size_t>(g)]) * (t - mean[static_cast<std::size_t>(g)]);
    }
  return acc / (static_cast<double>(eval_idx.size()) * env::kNumStages);
}

}  // namespace marca::cost
