#pragma once

// Synthetic multi-stage recommender pipeline: three cooperative stages
// (retrieval → pre-ranking → ranking), a frozen latent revenue function
// with cross-stage coupling through realized candidate pools, and a
// hidden per-request machine-cost model that the cost bench estimates.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "marca/common.hpp"
#include "marca/nn/mlp.hpp"

namespace marca::env {

inline constexpr int kNumStages = 3;

using JointAction = std::array<int, kNumStages>;

struct RequestContext {
  std::vector<double> features;
  int value_tier = 0;
  double timestamp_sec = 0.0;  // seconds within the simulated day
  int platform_id = 0;
};

struct RankingAction {
  int model_level = 0;
  int truncation = 0;
};

// Per-stage discrete action sets; index 0 is the cheapest action of its
// stage by construction.
struct StageActionSpace {
  std::vector<std::vector<int>> channel_subsets;  // stage 0
  std::vector<int> prerank_truncations;           // stage 1
  std::vector<RankingAction> ranking_actions;     // stage 2

  int count(int stage) const;
  int joint_count() const;
  JointAction decode(int flat) const;
  int encode(const JointAction& a) const;
  void validate(const JointAction& a) const;
};

struct EnvConfig {
  std::uint64_t seed = 1;
  std::size_t feature_dim = 16;
  int n_tiers = 4;
  int n_platforms = 3;
  std::vector<double> tier_probs{0.4, 0.3, 0.2, 0.1};
  std::vector<double> tier_value_mult{0.5, 1.0, 1.8, 3.0};

  // action space
  std::vector<double> channel_base_counts{60.0, 90.0, 150.0};
  std::vector<std::vector<int>> channel_subsets{{0}, {0, 1}, {0, 2}, {0, 1, 2}};
  std::vector<int> prerank_truncations{16, 64, 192};
  std::vector<RankingAction> ranking_actions{{0, 16}, {0, 128}, {1, 16}, {1, 128}};

  // latent revenue shape
  std::array<double, kNumStages> kappa{1.7, 1.5, 1.9};
  double model_level_boost_base = 0.55;  // effort multiplier at level 0
  double model_level_boost_step = 0.45;  // added per level
  double reward_noise_frac = 0.1;        // sigma = frac · mean latent revenue

  // hidden machine-cost model (ground truth the bench estimates)
  std::array<double, kNumStages> queue_cost_base{0.008, 0.012, 0.020};
  std::array<double, kNumStages> queue_cost_ref_len{192.0, 128.0, 96.0};
  std::array<double, kNumStages> queue_cost_power{1.30, 1.30, 1.45};
  std::vector<double> channel_unit_cost{0.004, 0.007, 0.012};
  std::vector<double> model_level_cost{0.004, 0.028};
  std::vector<double> tier_cost_mult{0.9, 1.0, 1.1, 1.2};
  std::vector<double> degradation_factor{1.0, 0.9, 0.75};

  static EnvConfig defaults();  // |A| = 4·3·4 = 48
  static EnvConfig mini();      // |A| = 2·2·2 = 8, brute-force friendly

  std::uint64_t content_hash() const;
};

struct EpisodeStep {
  std::vector<double> state;       // global state before the stage acts
  std::vector<double> obs;         // acting agent's observation
  int action = 0;                  // stage-local action index
  std::vector<double> next_state;  // global state after the stage acts
};

struct EpisodeRecord {
  RequestContext ctx;
  JointAction actions{};
  std::array<EpisodeStep, kNumStages> steps;
  double reward = 0.0;  // observed terminal business revenue (noisy)
  std::array<int, kNumStages> realized_pool{};
  std::array<double, kNumStages> realized_cost{};
};

class Env {
 public:
  explicit Env(EnvConfig cfg);

  const EnvConfig& config() const { return cfg_; }
  const StageActionSpace& actions() const { return space_; }

  RequestContext sample_request(Rng& rng) const;

  // deterministic candidate count produced by one retrieval channel
  int channel_count(const RequestContext& s, int channel) const;

  // realized candidate pools after each stage, deterministic in (s, a)
  std::array<int, kNumStages> realized_pools(const RequestContext& s, const JointAction& a) const;

  std::array<double, kNumStages> efforts(const RequestContext& s, const JointAction& a) const;

  // latent ground-truth revenue; strictly increasing in each stage effort
  double latent_revenue(const RequestContext& s, const JointAction& a) const;

  // latent + seeded zero-mean Gaussian noise
  double observed_reward(const RequestContext& s, const JointAction& a, Rng& noise_rng) const;

  double mean_latent_revenue() const { return mean_latent_revenue_; }
  double reward_noise_sigma() const { return noise_sigma_; }

  EpisodeRecord run_episode(const RequestContext& s, const JointAction& a, Rng& noise_rng) const;

  // --- hidden machine-cost model -----------------------------------------
  // per-request true cost of one stage at effective queue length `len`
  double true_queue_cost(int stage, int tier, double len) const;
  double true_stage_cost(const RequestContext& s, const JointAction& a, int stage) const;
  // full request cost; degradation scales multiplicatively
  double true_cost(const RequestContext& s, const JointAction& a, int degradation = 0) const;

  // --- feature vectors -----------------------------------------------------
  std::size_t obs_dim() const;
  std::size_t state_dim() const;
  // observation of the agent acting at `stage` given upstream actions in a
  std::vector<double> observation(const RequestContext& s, const JointAction& a, int stage) const;
  // global state before step `t` (t = kNumStages gives the terminal state)
  std::vector<double> state_vec(const RequestContext& s, const JointAction& a, int t) const;

 private:
  double value_scale(const RequestContext& s) const;
  void calibrate_mean_revenue();

  EnvConfig cfg_;
  StageActionSpace space_;
  nn::Mlp value_net_;                    // frozen per env seed
  std::vector<std::vector<double>> channel_mix_;  // per channel feature weights
  double max_retrievable_ = 0.0;
  double mean_latent_revenue_ = 0.0;
  double noise_sigma_ = 0.0;
};

}  // namespace marca::env
