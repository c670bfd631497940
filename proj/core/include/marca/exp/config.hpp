#pragma once

// Experiment configuration: one JSON file drives the whole pipeline.
// Unknown keys are rejected; the paper-faithful profile swaps in the
// production-scale hyperparameters.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "marca/alloc/allocator.hpp"
#include "marca/cost/costbench.hpp"
#include "marca/cost/predictor.hpp"
#include "marca/ctrl/balancer.hpp"
#include "marca/env/env.hpp"
#include "marca/env/traffic.hpp"
#include "marca/rl/baselines.hpp"
#include "marca/rl/trainer.hpp"

namespace marca::exp {

struct ExperimentConfig {
  std::string profile = "desk";  // "desk" | "paper-faithful"

  env::EnvConfig env;

  // dataset
  std::size_t n_requests = 20000;
  std::string policy = "uniform_random";
  double policy_epsilon = 0.3;
  std::uint64_t data_seed = 101;
  double test_fraction = 0.2;

  cost::BenchConfig bench;
  cost::PredictorConfig predictor;
  alloc::GroundTruthConfig gt;

  rl::TrainerConfig trainer;
  rl::BaselineConfig baseline;
  std::vector<std::string> methods{"awrq_mixer", "qmix", "vdn", "dqn", "drqn"};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  // control
  env::TrafficProfile traffic;
  ctrl::ClosedLoopConfig control;
  std::size_t control_intervals = 1440;  // 24 simulated hours at 1-minute intervals
  std::size_t history_intervals = 600;
  std::size_t sweep_intervals = 360;  // shorter horizon for the per-knob sweeps
  ctrl::SystemModelConfig sysmodel;
  std::vector<std::string> controllers{"mpc", "feedback", "binary_search", "static"};
  std::vector<double> sweep_alpha{0.2, 0.4, 0.6, 0.8};
  std::vector<double> sweep_beta{2.0, 4.0, 8.0, 16.0};
  std::vector<int> sweep_horizon{2, 5, 10, 15};

  // evaluation
  std::size_t eval_requests_cap = 2000;  // test requests used for r_s/Return%
  std::size_t val_requests = 400;        // validation subset for training curves

  std::string output_dir = "out";
  int workers = 2;

  static ExperimentConfig desk_defaults();
  void apply_profile();  // paper-faithful overrides (Table-6 scale)

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  std::uint64_t content_hash() const;

  // output_dir after the MARCA_OUT environment override
  std::filesystem::path resolved_output_dir() const;
};

}  // namespace marca::exp
