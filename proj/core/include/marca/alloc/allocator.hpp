#pragma once

// Per-request Lagrangian decision rule, quota-constrained greedy
// allocation for the revenue-simulation protocol, Return% evaluation and
// the DCAF-style binary-search λ.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "marca/env/dataset.hpp"
#include "marca/nn/checkpoint.hpp"
#include "marca/nn/mlp.hpp"

namespace marca::alloc {

// a* = argmax_a (Q(s,a) − λ·C(s,a)); ties toward lower cost, then lower index
int decide(std::span<const double> q_values, std::span<const double> costs, double lambda);

struct ActionQuota {
  std::vector<long> counts;  // per flat joint action
  long total() const;
};

// quotas from the logged test-split action frequencies
ActionQuota quota_from_frequencies(const env::Env& e, const env::LoggedDataset& ds,
                                   const std::vector<std::size_t>& idx);

struct AllocationPlan {
  std::vector<int> assigned;  // per request: flat action
  double predicted_total = 0.0;
};

// sorts all (request, action) pairs by predicted Q descending and assigns
// greedily under the quota; ties by (request index, action index)
AllocationPlan greedy_allocate(const std::vector<std::vector<double>>& predicted_q,
                               const ActionQuota& quota);

// Return% = Σ gt(plan) / Σ gt(reference plan) × 100
double return_percent(const AllocationPlan& plan, const AllocationPlan& reference_plan,
                      const std::vector<std::vector<double>>& ground_truth_q);

// smallest λ (within relative width 1e-3) whose aggregate chosen cost
// meets the budget; rejects if even max-λ (min-cost) plans exceed it
double binary_search_lambda(const std::vector<std::vector<double>>& q,
                            const std::vector<std::vector<double>>& c, double budget,
                            double lambda_lo = 0.0, double lambda_hi = 1e6);

double plan_cost(const std::vector<std::vector<double>>& c, const std::vector<int>& assigned);
std::vector<int> decide_all(const std::vector<std::vector<double>>& q,
                            const std::vector<std::vector<double>>& c, double lambda);

// --- revenue-simulation ground truth --------------------------------------
// ensemble of independently seeded feed-forward regressors trained on
// train+test observed rewards; predictions are the member mean
struct GroundTruthConfig {
  int members = 5;
  std::size_t hidden = 64;
  int iterations = 1500;
  int batch_size = 128;
  double lr = 0.005;
  std::uint64_t seed = 977;
};

class GroundTruthModel {
 public:
  GroundTruthModel() = default;

  void train(const env::Env& e, const env::LoggedDataset& ds, const GroundTruthConfig& cfg);
  bool trained() const { return trained_; }

  double predict(const env::Env& e, const env::RequestContext& s, const env::JointAction& a) const;
  std::vector<double> predict_all(const env::Env& e, const env::RequestContext& s) const;

  nn::Checkpoint to_checkpoint() const;
  static GroundTruthModel from_checkpoint(const nn::Checkpoint& c);

 private:
  std::vector<double> encode(const env::Env& e, const env::RequestContext& s,
                             const env::JointAction& a) const;

  std::vector<nn::Mlp> members_;
  GroundTruthConfig cfg_;
  bool trained_ = false;
};

std::string plan_csv(const env::Env& e, const std::vector<std::size_t>& request_idx,
                     const AllocationPlan& plan, const std::vector<std::vector<double>>& pred_q,
                     const std::vector<std::vector<double>>& true_q,
                     const std::vector<std::vector<double>>& costs);

}  // namespace marca::alloc
