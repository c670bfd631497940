#pragma once

// Pipeline orchestration behind the CLI: dataset generation, the cost
// bench, method training (with worker-pool seed parallelism), the
// four-step revenue-simulation evaluation, allocation export, closed-loop
// control runs, and consolidated reporting.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "marca/exp/config.hpp"

namespace marca::exp {

struct Workspace {
  std::filesystem::path root;

  std::filesystem::path dataset_path() const { return root / "dataset.ndjson"; }
  std::filesystem::path dataset_manifest() const { return root / "dataset.manifest.json"; }
  std::filesystem::path costmodel_path() const { return root / "costmodel.json"; }
  std::filesystem::path loadtests_csv() const { return root / "loadtests.csv"; }
  std::filesystem::path bench_manifest() const { return root / "costmodel.manifest.json"; }
  std::filesystem::path gt_model_path() const { return root / "gt_model.json"; }
  std::filesystem::path run_dir(const std::string& method, std::uint64_t seed) const {
    return root / "runs" / (method + "_seed" + std::to_string(seed));
  }
  std::filesystem::path eval_dir() const { return root / "eval"; }
  std::filesystem::path control_dir() const { return root / "control"; }
  std::filesystem::path report_dir() const { return root / "report"; }
};

// method tags: the mixer family (full model, ablations, sensitivity
// variants) plus the eight reference baselines
bool is_mixer_family(const std::string& tag);
bool is_known_method(const std::string& tag);
std::vector<std::string> all_method_tags();

rl::TrainerConfig mixer_config_for(const ExperimentConfig& cfg, const std::string& tag,
                                   std::uint64_t seed);
rl::BaselineConfig baseline_config_for(const ExperimentConfig& cfg, const std::string& tag,
                                       std::uint64_t seed);

using JointQFn = std::function<std::vector<double>(const env::RequestContext&)>;

struct EvalContext {
  std::vector<std::size_t> request_idx;            // subset of test episodes
  alloc::ActionQuota quota;                        // from the same subset
  std::vector<std::vector<double>> gt_q;           // [request][action]
  alloc::AllocationPlan gt_plan;                   // ground-truth model's own plan
  std::vector<double> latent_at_logged;            // latent revenue at logged pairs
  std::vector<int> logged_flat;                    // logged flat action per request
};

EvalContext build_eval_context(const env::Env& e, const env::LoggedDataset& ds,
                               const alloc::GroundTruthModel& gt, std::size_t request_cap);

struct MethodEval {
  double rs = 0.0;
  double return_pct = 0.0;
};

MethodEval evaluate_joint_q(const env::Env& e, const env::LoggedDataset& ds,
                            const EvalContext& ctx, const JointQFn& fn);

// validation-Return% closure factory shared by all trainers
std::function<double(const JointQFn&)> make_val_metric(const env::Env& e,
                                                       const env::LoggedDataset& ds,
                                                       const EvalContext& val_ctx);

// ---- pipeline stages -------------------------------------------------------

void cmd_gen_data(const ExperimentConfig& cfg, bool force);
void cmd_bench_cost(const ExperimentConfig& cfg, bool force);
// methods: subset of cfg.methods (empty → all); trains every seed
void cmd_train(const ExperimentConfig& cfg, const std::vector<std::string>& methods, bool force);
void cmd_evaluate(const ExperimentConfig& cfg);
void cmd_allocate(const ExperimentConfig& cfg, const std::string& method, std::uint64_t seed);
void cmd_control(const ExperimentConfig& cfg, bool run_sweeps);
void cmd_report(const ExperimentConfig& cfg);

// shared loaders (throw with a clear message when an input is missing)
env::Env load_env(const ExperimentConfig& cfg);
env::LoggedDataset load_dataset_checked(const ExperimentConfig& cfg, const env::Env& e);
cost::CostModel load_cost_model(const ExperimentConfig& cfg);
alloc::GroundTruthModel load_or_train_gt(const ExperimentConfig& cfg, const env::Env& e,
                                         const env::LoggedDataset& ds);

// per-request (Q, C) tables for the serving stack
ctrl::RequestTableFn make_request_tables(const env::Env& e, const rl::MixerModel& model,
                                         const cost::CostModel& cm,
                                         const cost::ActionResultPredictor& pred);

struct RunSummary {
  std::string method;
  std::uint64_t seed = 0;
  double rs = 0.0;
  double return_pct = 0.0;
  double convergence_steps = 0.0;
  bool convergence_reached = false;
  double grad_variance = 0.0;
  bool has_grad_variance = false;
};

}  // namespace marca::exp
