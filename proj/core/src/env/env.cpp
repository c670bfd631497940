#include "marca/env/env.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "marca/nn/layers.hpp"

namespace marca::env {

int StageActionSpace::count(int stage) const {
  switch (stage) {
    case 0: return static_cast<int>(channel_subsets.size());
    case 1: return static_cast<int>(prerank_truncations.size());
    case 2: return static_cast<int>(ranking_actions.size());
    default: fail("StageActionSpace: bad stage " + std::to_string(stage));
  }
}

int StageActionSpace::joint_count() const { return count(0) * count(1) * count(2); }

JointAction StageActionSpace::decode(int flat) const {
  require(flat >= 0 && flat < joint_count(), "decode: flat action out of range");
  JointAction a{};
  a[2] = flat % count(2);
  flat /= count(2);
  a[1] = flat % count(1);
  a[0] = flat / count(1);
  return a;
}

int StageActionSpace::encode(const JointAction& a) const {
  validate(a);
  return (a[0] * count(1) + a[1]) * count(2) + a[2];
}

void StageActionSpace::validate(const JointAction& a) const {
  for (int g = 0; g < kNumStages; ++g) {
    require(a[g] >= 0 && a[g] < count(g),
            "JointAction: stage " + std::to_string(g) + " index " + std::to_string(a[g]) +
                " out of range [0," + std::to_string(count(g)) + ")");
  }
}

EnvConfig EnvConfig::defaults() { return EnvConfig{}; }

EnvConfig EnvConfig::mini() {
  EnvConfig c;
  c.channel_subsets = {{0}, {0, 1, 2}};
  c.prerank_truncations = {16, 128};
  c.ranking_actions = {{0, 32}, {1, 32}};
  return c;
}

std::uint64_t EnvConfig::content_hash() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["feature_dim"] = feature_dim;
  j["n_tiers"] = n_tiers;
  j["n_platforms"] = n_platforms;
  j["tier_probs"] = tier_probs;
  j["tier_value_mult"] = tier_value_mult;
  j["channel_base_counts"] = channel_base_counts;
  j["channel_subsets"] = channel_subsets;
  j["prerank_truncations"] = prerank_truncations;
  nlohmann::ordered_json ra = nlohmann::ordered_json::array();
  for (const auto& r : ranking_actions) ra.push_back({r.model_level, r.truncation});
  j["ranking_actions"] = ra;
  j["kappa"] = kappa;
  j["model_level_boost"] = {model_level_boost_base, model_level_boost_step};
  j["reward_noise_frac"] = reward_noise_frac;
  j["queue_cost_base"] = queue_cost_base;
  j["queue_cost_ref_len"] = queue_cost_ref_len;
  j["queue_cost_power"] = queue_cost_power;
  j["channel_unit_cost"] = channel_unit_cost;
  j["model_level_cost"] = model_level_cost;
  j["tier_cost_mult"] = tier_cost_mult;
  j["degradation_factor"] = degradation_factor;
  return fnv1a64(j.dump());
}

Env::Env(EnvConfig cfg) : cfg_(std::move(cfg)) {
  require(cfg_.tier_probs.size() == static_cast<std::size_t>(cfg_.n_tiers) &&
              cfg_.tier_value_mult.size() == static_cast<std::size_t>(cfg_.n_tiers) &&
              cfg_.tier_cost_mult.size() == static_cast<std::size_t>(cfg_.n_tiers),
          "EnvConfig: tier table sizes must match n_tiers");
  require(!cfg_.channel_subsets.empty() && !cfg_.prerank_truncations.empty() &&
              !cfg_.ranking_actions.empty(),
          "EnvConfig: every stage needs at least one action");
  for (const auto& subset : cfg_.channel_subsets)
    for (int c : subset)
      require(c >= 0 && c < static_cast<int>(cfg_.channel_base_counts.size()),
              "EnvConfig: channel subset references unknown channel");

  space_.channel_subsets = cfg_.channel_subsets;
  space_.prerank_truncations = cfg_.prerank_truncations;
  space_.ranking_actions = cfg_.ranking_actions;

  // frozen request-value network
  value_net_ = nn::Mlp({cfg_.feature_dim, 24, 1}, derive_seed(cfg_.seed, "value_net"));

  // per-channel feature mix for deterministic candidate counts
  Rng mix_rng(derive_seed(cfg_.seed, "channel_mix"));
  channel_mix_.resize(cfg_.channel_base_counts.size());
  for (auto& w : channel_mix_) {
    w.resize(cfg_.feature_dim);
    for (double& v : w) v = mix_rng.normal() / std::sqrt(static_cast<double>(cfg_.feature_dim));
  }

  max_retrievable_ = 0.0;
  for (double base : cfg_.channel_base_counts) max_retrievable_ += base * 1.2;

  calibrate_mean_revenue();
}

RequestContext Env::sample_request(Rng& rng) const {
  RequestContext s;
  s.features.resize(cfg_.feature_dim);
  for (double& f : s.features) f = rng.normal();
  const double u = rng.uniform();
  double acc = 0.0;
  s.value_tier = cfg_.n_tiers - 1;
  for (int t = 0; t < cfg_.n_tiers; ++t) {
    acc += cfg_.tier_probs[static_cast<std::size_t>(t)];
    if (u < acc) {
      s.value_tier = t;
      break;
    }
  }
  s.platform_id = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cfg_.n_platforms)));
  s.timestamp_sec = rng.uniform(0.0, 86400.0);
  return s;
}

int Env::channel_count(const RequestContext& s, int channel) const {
  const auto& w = channel_mix_[static_cast<std::size_t>(channel)];
  double dot = 0.0;
  for (std::size_t i = 0; i < w.size() && i < s.features.size(); ++i) dot += w[i] * s.features[i];
  const double frac = 0.8 + 0.4 * nn::sigmoid(dot);  // in (0.8, 1.2)
  const double base = cfg_.channel_base_counts[static_cast<std::size_t>(channel)];
  return std::max(1, static_cast<int>(std::lround(base * frac)));
}

std::array<int, kNumStages> Env::realized_pools(const RequestContext& s,
                                                const JointAction& a) const {
  space_.validate(a);
  int pool1 = 0;
  for (int c : space_.channel_subsets[static_cast<std::size_t>(a[0])]) pool1 += channel_count(s, c);
  const int trunc2 = space_.prerank_truncations[static_cast<std::size_t>(a[1])];
  const int pool2 = std::min(pool1, trunc2);
  const int trunc3 = space_.ranking_actions[static_cast<std::size_t>(a[2])].truncation;
  const int pool3 = std::min(pool2, trunc3);
  return {pool1, pool2, pool3};
}

std::array<double, kNumStages> Env::efforts(const RequestContext& s, const JointAction& a) const {
  const auto pools = realized_pools(s, a);
  const double e1 = static_cast<double>(pools[0]) / max_retrievable_;
  int max_trunc2 = 0;
  for (int t : space_.prerank_truncations) max_trunc2 = std::max(max_trunc2, t);
  const double e2 = static_cast<double>(pools[1]) / static_cast<double>(max_trunc2);
  int max_trunc3 = 0;
  for (const auto& r : space_.ranking_actions) max_trunc3 = std::max(max_trunc3, r.truncation);
  const auto& ra = space_.ranking_actions[static_cast<std::size_t>(a[2])];
  const double boost = cfg_.model_level_boost_base + cfg_.model_level_boost_step * ra.model_level;
  const double e3 = boost * static_cast<double>(pools[2]) / static_cast<double>(max_trunc3);
  return {e1, e2, e3};
}

double Env::value_scale(const RequestContext& s) const {
  nn::Tensor x{{1, cfg_.feature_dim}, s.features};
  const double raw = value_net_.forward(x).data[0];
  return cfg_.tier_value_mult[static_cast<std::size_t>(s.value_tier)] * nn::softplus(raw);
}

double Env::latent_revenue(const RequestContext& s, const JointAction& a) const {
  const auto e = efforts(s, a);
  double prod = 1.0;
  for (int g = 0; g < kNumStages; ++g) prod *= 1.0 - std::exp(-cfg_.kappa[static_cast<std::size_t>(g)] * e[static_cast<std::size_t>(g)]);
  return value_scale(s) * prod;
}

double Env::observed_reward(const RequestContext& s, const JointAction& a, Rng& noise_rng) const {
  return latent_revenue(s, a) + noise_rng.normal(0.0, noise_sigma_);
}

void Env::calibrate_mean_revenue() {
  Rng rng(derive_seed(cfg_.seed, "revenue_calibration"));
  const int n = 1024;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    RequestContext s = sample_request(rng);
    const int flat = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(space_.joint_count())));
    sum += latent_revenue(s, space_.decode(flat));
  }
  mean_latent_revenue_ = sum / n;
  noise_sigma_ = cfg_.reward_noise_frac * mean_latent_revenue_;
}

EpisodeRecord Env::run_episode(const RequestContext& s, const JointAction& a,
                               Rng& noise_rng) const {
  space_.validate(a);
  EpisodeRecord rec;
  rec.ctx = s;
  rec.actions = a;
  rec.realized_pool = realized_pools(s, a);
  for (int t = 0; t < kNumStages; ++t) {
    auto& step = rec.steps[static_cast<std::size_t>(t)];
    step.state = state_vec(s, a, t);
    step.obs = observation(s, a, t);
    step.action = a[static_cast<std::size_t>(t)];
    step.next_state = state_vec(s, a, t + 1);
    rec.realized_cost[static_cast<std::size_t>(t)] = true_stage_cost(s, a, t);
  }
  rec.reward = observed_reward(s, a, noise_rng);
  return rec;
}

double Env::true_queue_cost(int stage, int tier, double len) const {
  const auto g = static_cast<std::size_t>(stage);
  const double rel = std::max(0.0, len) / cfg_.queue_cost_ref_len[g];
  const double shape = 0.35 + 0.65 * std::pow(rel, cfg_.queue_cost_power[g]);
  return cfg_.queue_cost_base[g] * cfg_.tier_cost_mult[static_cast<std::size_t>(tier)] * shape;
}

double Env::true_stage_cost(const RequestContext& s, const JointAction& a, int stage) const {
  const auto pools = realized_pools(s, a);
  double cost = true_queue_cost(stage, s.value_tier, pools[static_cast<std::size_t>(stage)]);
  if (stage == 0) {
    for (int c : space_.channel_subsets[static_cast<std::size_t>(a[0])])
      cost += cfg_.channel_unit_cost[static_cast<std::size_t>(c)];
  } else if (stage == 2) {
    cost += cfg_.model_level_cost[static_cast<std::size_t>(
        space_.ranking_actions[static_cast<std::size_t>(a[2])].model_level)];
  }
  return cost;
}

double Env::true_cost(const RequestContext& s, const JointAction& a, int degradation) const {
  require(degradation >= 0 &&
              degradation < static_cast<int>(cfg_.degradation_factor.size()),
          "true_cost: degradation level out of range");
  double total = 0.0;
  for (int g = 0; g < kNumStages; ++g) total += true_stage_cost(s, a, g);
  return cfg_.degradation_factor[static_cast<std::size_t>(degradation)] * total;
}

std::size_t Env::obs_dim() const { return cfg_.feature_dim + 9; }
std::size_t Env::state_dim() const { return cfg_.feature_dim + 11; }

namespace {
double pool_norm(double pool, double ref) { return std::log1p(pool) / std::log1p(ref); }
}  // namespace

std::vector<double> Env::observation(const RequestContext& s, const JointAction& a,
                                     int stage) const {
  require(stage >= 0 && stage < kNumStages, "observation: bad stage");
  const std::size_t F = cfg_.feature_dim;
  std::vector<double> o(obs_dim(), 0.0);
  std::copy(s.features.begin(), s.features.end(), o.begin());
  o[F] = cfg_.n_tiers > 1 ? static_cast<double>(s.value_tier) / (cfg_.n_tiers - 1) : 0.0;
  o[F + 1] =
      cfg_.n_platforms > 1 ? static_cast<double>(s.platform_id) / (cfg_.n_platforms - 1) : 0.0;
  const double w = 2.0 * 3.14159265358979323846 * s.timestamp_sec / 86400.0;
  o[F + 2] = std::sin(w);
  o[F + 3] = std::cos(w);
  o[F + 4 + static_cast<std::size_t>(stage)] = 1.0;
  if (stage > 0) {
    const auto pools = realized_pools(s, a);
    o[F + 7] = pool_norm(pools[static_cast<std::size_t>(stage - 1)], max_retrievable_);
    const int prev = a[static_cast<std::size_t>(stage - 1)];
    const int prev_count = space_.count(stage - 1);
    o[F + 8] = prev_count > 1 ? static_cast<double>(prev) / (prev_count - 1) : 0.0;
  }
  return o;
}

std::vector<double> Env::state_vec(const RequestContext& s, const JointAction& a, int t) const {
  require(t >= 0 && t <= kNumStages, "state_vec: bad step index");
  const std::size_t F = cfg_.feature_dim;
  std::vector<double> v(state_dim(), 0.0);
  std::copy(s.features.begin(), s.features.end(), v.begin());
  v[F] = cfg_.n_tiers > 1 ? static_cast<double>(s.value_tier) / (cfg_.n_tiers - 1) : 0.0;
  v[F + 1] =
      cfg_.n_platforms > 1 ? static_cast<double>(s.platform_id) / (cfg_.n_platforms - 1) : 0.0;
  const double w = 2.0 * 3.14159265358979323846 * s.timestamp_sec / 86400.0;
  v[F + 2] = std::sin(w);
  v[F + 3] = std::cos(w);
  v[F + 4] = static_cast<double>(t) / kNumStages;
  if (t > 0) {
    const auto pools = realized_pools(s, a);
    for (int g = 0; g < t && g < kNumStages; ++g) {
      v[F + 5 + static_cast<std::size_t>(g)] = pool_norm(pools[static_cast<std::size_t>(g)], max_retrievable_);
      const int cnt = space_.count(g);
      v[F + 8 + static_cast<std::size_t>(g)] =
          static_cast<double>(a[static_cast<std::size_t>(g)] + 1) / cnt;
    }
  }
  return v;
}

}  // namespace marca::env
