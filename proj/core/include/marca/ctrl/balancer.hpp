#pragma once

// Revenue-cost balancing controllers: receding-horizon MPC over λ
// sequences against a learned utilization model, a PI feedback baseline,
// a DCAF-style per-interval binary search, and a static λ. Closed-loop
// simulation drives per-request decisions against generated traffic and
// reports utilization (μ) and overutilization (ν).

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "marca/alloc/allocator.hpp"
#include "marca/cost/costbench.hpp"
#include "marca/env/traffic.hpp"
#include "marca/nn/mlp.hpp"

namespace marca::ctrl {

struct SystemTransition {
  double util = 0.0;       // Ĉ_t (utilization, fraction of budget units)
  double traffic = 0.0;    // traffic level driving the next interval
  double tod_sin = 0.0;    // time-of-day encoding of the next interval
  double tod_cos = 0.0;
  double lambda = 0.0;     // λ_t applied over the interval
  double next_util = 0.0;  // Ĉ_{t+1}
};

struct SystemModelConfig {
  std::size_t hidden = 32;
  int iterations = 2500;
  int batch_size = 64;
  double lr = 0.005;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 5151;
};

class SystemModel {
 public:
  SystemModel() = default;

  // least-squares fit of Ĉ_{t+1} = g(Ĉ_t, s_t, λ_t); needs ≥ 100 transitions
  void fit(const std::vector<SystemTransition>& history, const SystemModelConfig& cfg);
  bool fitted() const { return fitted_; }
  double holdout_rmse() const { return holdout_rmse_; }

  // prediction is clamped at zero (utilization cannot be negative)
  double predict(double util, double traffic, double tod_sin, double tod_cos,
                 double lambda) const;

 private:
  std::vector<double> encode(double util, double traffic, double tod_sin, double tod_cos,
                             double lambda) const;
  nn::Mlp net_;
  double traffic_scale_ = 1.0;
  double lambda_scale_ = 1.0;
  double holdout_rmse_ = 0.0;
  bool fitted_ = false;
};

struct MPCConfig {
  int horizon = 10;      // N
  double alpha = 0.4;    // decay weighting
  double beta = 8.0;     // oscillation damping
  double budget = 0.85;  // C_m in utilization units
  double lambda_min = 1e-3;
  double lambda_max = 200.0;
  int grid_points = 9;
  int refinement_passes = 2;
};

struct StateForecast {
  double traffic = 0.0;
  double tod_sin = 0.0;
  double tod_cos = 0.0;
};

// J = Σ_{i=0..N} αⁱ‖Ĉ_{t+i} − C_m‖² + per-step β·αⁱ‖Ĉ_{t+i} − Ĉ_{t+i−1}‖²
// applied where Ĉ_{t+i} ≥ C_m; the trajectory is rolled through the model
double mpc_objective(std::span<const double> lambda_seq, double util_now, double util_prev,
                     std::span<const StateForecast> forecast, const SystemModel& model,
                     const MPCConfig& cfg);

// objective on an explicit predicted trajectory (recomputation surface)
double mpc_objective_on_trajectory(std::span<const double> trajectory, double util_prev,
                                   const MPCConfig& cfg);

// coordinate descent over a log-spaced λ grid with refinement passes,
// warm-started from the previous solution shifted by one
std::vector<double> solve_lambda_sequence(double util_now, double util_prev,
                                          std::span<const StateForecast> forecast,
                                          const SystemModel& model, const MPCConfig& cfg,
                                          std::span<const double> warm_start);

struct FeedbackConfig {
  double k_p = 12.0;
  double k_i = 3.0;
  double integral_clamp = 4.0;
};

struct ControllerState {
  double lambda = 1.0;
  double integral = 0.0;
  std::vector<double> last_solution;  // MPC warm start
};

// λ_{t+1} = max(0, λ_t + k_p·e_t + k_i·Σe), e_t = (Ĉ_t − C_m)/C_m
double feedback_step(ControllerState& state, double util, const MPCConfig& cfg,
                     const FeedbackConfig& fb);

enum class ControllerKind { mpc, feedback, binary_search, static_lambda };
std::string to_string(ControllerKind k);
ControllerKind controller_from_string(const std::string& s);

struct ClosedLoopConfig {
  MPCConfig mpc;
  FeedbackConfig feedback;
  double static_lambda = 8.0;
  double capacity_core_seconds = 10.0;  // per interval; utilization = cost / capacity
  std::size_t max_requests_per_interval = 24;  // decision sampling cap
  bool oracle_forecast = true;  // false → persistence forecast
  std::uint64_t seed = 31;
};

struct ClosedLoopResult {
  std::vector<double> lambda_trace;
  std::vector<double> util_trace;
  std::vector<double> predicted_util_trace;
  std::vector<long> traffic_trace;
  double mu = 0.0;
  double nu = 0.0;
};

// per-request Q and cost tables for one interval's sampled requests
using RequestTableFn = std::function<void(const env::RequestContext&, std::vector<double>& q_row,
                                          std::vector<double>& c_row)>;

ClosedLoopResult closed_loop_run(ControllerKind kind, const env::Env& e,
                                 const env::TrafficProfile& traffic, std::size_t intervals,
                                 const ClosedLoopConfig& cfg, const RequestTableFn& tables,
                                 const SystemModel* model);

// μ = mean(min(Ĉ,C_m)/C_m), ν = mean((max(Ĉ,C_m)−C_m)/C_m)
double utilization_rate(std::span<const double> util, double budget);
double overutilization_rate(std::span<const double> util, double budget);

// bootstrap history for fitting g: random-walk λ excitation
std::vector<SystemTransition> collect_system_history(const env::Env& e,
                                                     const env::TrafficProfile& traffic,
                                                     std::size_t intervals,
                                                     const ClosedLoopConfig& cfg,
                                                     const RequestTableFn& tables);

std::string trace_csv(const ClosedLoopResult& r, double budget);

}  // namespace marca::ctrl
