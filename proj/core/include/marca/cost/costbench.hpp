#pragma once

// AutoBucket TestBench: simulated load tests against the environment's
// hidden machine model, the cost-per-bucket formula, monotone (PAV)
// queue-cost curves, elastic model/channel cost tables, degradation
// mapping, and the end-to-end request cost estimator.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "marca/env/env.hpp"

namespace marca::cost {

struct Bucket {
  int value_tier = 0;
  int queue_length = 0;
};

struct LoadTestResult {
  Bucket bucket;
  int stage = 0;
  double p_percent = 0.0;  // CPU utilization in [0,100]
  int n_machines = 0;
  int cores_per_machine = 0;
  double qps = 0.0;
  bool saturated = false;  // p hit 100; caller must lower qps
};

// p% = clamp(qps · c*(bucket) / (n·cores) · 100 + noise, 0, 100)
LoadTestResult simulate_loadtest(const env::Env& env, int stage, const Bucket& bucket, double qps,
                                 int n_machines, int cores, double noise_pct, std::uint64_t seed);

// Computation Cost per Bucket = (p% × n × N_cores) / QPS, in core-units/request
double cost_per_bucket(const LoadTestResult& r);

// Monotone non-decreasing piecewise-linear curve: linear interpolation
// between knots, boundary-slope extrapolation clamped at zero below.
struct CostCurve {
  std::vector<double> knot_x;
  std::vector<double> knot_y;

  double value(double x) const;
  bool monotone() const;
};

// least-squares isotonic fit (pool adjacent violators) over >= 2 points
CostCurve fit_monotone_curve(std::vector<std::pair<double, double>> points);

struct CostModel {
  // queue_curves[stage][tier]
  std::vector<std::vector<CostCurve>> queue_curves;
  std::vector<double> model_level_cost;
  std::vector<double> channel_cost;
  // degradation: multiplicative factors by default (factor[0] == 1), with
  // an additive-offset mode behind `additive_degradation`
  std::vector<double> degradation_factor{1.0, 0.9, 0.75};
  std::vector<double> degradation_offset{0.0, 0.0, 0.0};
  bool additive_degradation = false;
  std::string fit_note;

  bool fitted_for(int stage, int tier) const;

  // Ĉ(s,a): sum of per-stage queue-curve costs at the effective lengths,
  // plus the model-switch cost and the selected channel costs
  double base_cost(const env::StageActionSpace& space, int value_tier, const env::JointAction& a,
                   const std::array<double, env::kNumStages>& effective_lengths) const;

  // C(s,a) = degradation applied to Ĉ; multiplicative by default
  double estimate(const env::StageActionSpace& space, int value_tier, const env::JointAction& a,
                  const std::array<double, env::kNumStages>& effective_lengths,
                  int degradation) const;

  std::string to_json() const;
  static CostModel from_json(const std::string& text);
};

// nominal effective lengths assuming abundant upstream candidates: channel
// base counts for retrieval, truncation caps min-chained downstream
std::array<double, env::kNumStages> nominal_lengths(const env::EnvConfig& cfg,
                                                    const env::JointAction& a);

double estimate_cost(const env::RequestContext& s, const env::JointAction& a, const CostModel& m,
                     const env::StageActionSpace& space,
                     const std::array<double, env::kNumStages>& effective_lengths,
                     int degradation = 0);

struct BenchConfig {
  std::vector<int> queue_length_grid{8, 16, 32, 64, 128, 256};
  double qps = 100.0;
  int n_machines = 2;
  int cores = 8;
  double noise_pct = 0.4;
  int repeats = 3;  // load tests per bucket, costs averaged
  std::uint64_t seed = 7;
};

struct BenchOutput {
  CostModel model;
  std::vector<LoadTestResult> raw_results;
  int qps_reductions = 0;  // saturated buckets rerun at reduced qps
};

// full AutoBucket pipeline: grid load tests -> per-(stage,tier) PAV fits ->
// elastic model/channel tables -> degradation calibration
BenchOutput run_bench(const env::Env& env, const BenchConfig& cfg);

std::string raw_results_csv(const std::vector<LoadTestResult>& results);

}  // namespace marca::cost
