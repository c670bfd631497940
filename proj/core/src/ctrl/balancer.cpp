#include "marca/ctrl/balancer.hpp"

#include <algorithm>
#include <cmath>

#include "marca/io.hpp"
#include "marca/nn/adam.hpp"

namespace marca::ctrl {

using nn::Tensor;

// ---------------------------------------------------------------------------
// system model
// ---------------------------------------------------------------------------

std::vector<double> SystemModel::encode(double util, double traffic, double tod_sin,
                                        double tod_cos, double lambda) const {
  return {util, traffic / traffic_scale_, tod_sin, tod_cos,
          std::log1p(std::max(0.0, lambda)) / std::log1p(lambda_scale_)};
}

void SystemModel::fit(const std::vector<SystemTransition>& history, const SystemModelConfig& cfg) {
  require(history.size() >= 100, "SystemModel::fit: need at least 100 transitions, got " +
                                     std::to_string(history.size()));
  traffic_scale_ = 1.0;
  lambda_scale_ = 1.0;
  for (const auto& tr : history) {
    traffic_scale_ = std::max(traffic_scale_, tr.traffic);
    lambda_scale_ = std::max(lambda_scale_, tr.lambda);
  }

  // deterministic holdout: every k-th transition
  const std::size_t k = std::max<std::size_t>(2, static_cast<std::size_t>(
                                                     std::lround(1.0 / cfg.holdout_fraction)));
  std::vector<std::size_t> train_rows, hold_rows;
  for (std::size_t i = 0; i < history.size(); ++i)
    (i % k == 0 ? hold_rows : train_rows).push_back(i);

  const std::size_t in_dim = 5;
  net_ = nn::Mlp({in_dim, cfg.hidden, cfg.hidden / 2, 1}, derive_seed(cfg.seed, "sysmodel"));
  nn::Mlp grads = net_.grads_like();
  nn::ParamRefs prefs = net_.param_refs("g");
  nn::ParamRefs grefs = grads.param_refs("g");
  nn::AdamConfig acfg;
  acfg.lr = cfg.lr;
  nn::AdamOptimizer opt(acfg, prefs);
  Rng rng(derive_seed(cfg.seed, "batches"));

  const std::size_t bsz =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), train_rows.size());
  for (int it = 0; it < cfg.iterations; ++it) {
    Tensor x = Tensor::matrix(bsz, in_dim);
    std::vector<double> y(bsz);
    for (std::size_t b = 0; b < bsz; ++b) {
      const auto& tr = history[train_rows[rng.uniform_index(train_rows.size())]];
      const auto enc = encode(tr.util, tr.traffic, tr.tod_sin, tr.tod_cos, tr.lambda);
      std::copy(enc.begin(), enc.end(), x.data.begin() + static_cast<std::ptrdiff_t>(b * in_dim));
      y[b] = tr.next_util;
    }
    nn::zero_grads(grefs);
    nn::MlpCache cache;
    Tensor out = net_.forward(x, &cache);
    Tensor dy = Tensor::matrix(bsz, 1);
    for (std::size_t b = 0; b < bsz; ++b)
      dy.at(b, 0) = 2.0 * (out.at(b, 0) - y[b]) / static_cast<double>(bsz);
    net_.backward(dy, cache, grads);
    opt.step(prefs, grefs);
  }
  fitted_ = true;

  double acc = 0.0;
  for (std::size_t i : hold_rows) {
    const auto& tr = history[i];
    const double p = predict(tr.util, tr.traffic, tr.tod_sin, tr.tod_cos, tr.lambda);
    acc += (p - tr.next_util) * (p - tr.next_util);
  }
  holdout_rmse_ = hold_rows.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(hold_rows.size()));
}

double SystemModel::predict(double util, double traffic, double tod_sin, double tod_cos,
                            double lambda) const {
  require(fitted_, "SystemModel: predict before fit");
  const auto enc = encode(util, traffic, tod_sin, tod_cos, lambda);
  Tensor x{{1, enc.size()}, enc};
  return std::max(0.0, net_.forward(x).data[0]);
}

// ---------------------------------------------------------------------------
// MPC
// ---------------------------------------------------------------------------

double mpc_objective_on_trajectory(std::span<const double> trajectory, double util_prev,
                                   const MPCConfig& cfg) {
  require(!trajectory.empty(), "mpc_objective: empty trajectory");
  double j = 0.0;
  double decay = 1.0;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const double dev = trajectory[i] - cfg.budget;
    j += decay * dev * dev;
    if (trajectory[i] >= cfg.budget) {
      const double prev = i == 0 ? util_prev : trajectory[i - 1];
      const double osc = trajectory[i] - prev;
      j += cfg.beta * decay * osc * osc;
    }
    decay *= cfg.alpha;
  }
  return j;
}

namespace {
std::vector<double> roll_trajectory(std::span<const double> lambda_seq, double util_now,
                                    std::span<const StateForecast> forecast,
                                    const SystemModel& model) {
  // states Ĉ_t..Ĉ_{t+N}: decision i produces the (i+1)-th state
  std::vector<double> traj(lambda_seq.size() + 1);
  traj[0] = util_now;
  for (std::size_t i = 0; i < lambda_seq.size(); ++i) {
    const auto& f = forecast[i];
    traj[i + 1] = model.predict(traj[i], f.traffic, f.tod_sin, f.tod_cos, lambda_seq[i]);
  }
  return traj;
}
}  // namespace

double mpc_objective(std::span<const double> lambda_seq, double util_now, double util_prev,
                     std::span<const StateForecast> forecast, const SystemModel& model,
                     const MPCConfig& cfg) {
  require(static_cast<int>(lambda_seq.size()) == cfg.horizon,
          "mpc_objective: λ sequence length must equal the horizon");
  require(forecast.size() >= lambda_seq.size(), "mpc_objective: forecast shorter than horizon");
  const auto traj = roll_trajectory(lambda_seq, util_now, forecast, model);
  return mpc_objective_on_trajectory(traj, util_prev, cfg);
}

std::vector<double> solve_lambda_sequence(double util_now, double util_prev,
                                          std::span<const StateForecast> forecast,
                                          const SystemModel& model, const MPCConfig& cfg,
                                          std::span<const double> warm_start) {
  require(cfg.horizon >= 1, "solve_lambda_sequence: horizon must be >= 1");
  const std::size_t N = static_cast<std::size_t>(cfg.horizon);

  std::vector<double> seq(N, std::sqrt(cfg.lambda_min * cfg.lambda_max));
  if (warm_start.size() == N) {
    // shift the previous solution one step forward
    for (std::size_t i = 0; i + 1 < N; ++i) seq[i] = warm_start[i + 1];
    seq[N - 1] = warm_start[N - 1];
  }

  auto objective = [&](const std::vector<double>& s) {
    return mpc_objective(s, util_now, util_prev, forecast, model, cfg);
  };
  double best_j = objective(seq);

  // coarse coordinate sweep over the full log grid, then local refinements
  auto sweep = [&](double span_factor) {
    for (std::size_t i = 0; i < N; ++i) {
      const double center = seq[i];
      double lo = cfg.lambda_min, hi = cfg.lambda_max;
      if (span_factor > 0.0) {
        lo = std::max(cfg.lambda_min, center / span_factor);
        hi = std::min(cfg.lambda_max, center * span_factor);
        if (lo >= hi) continue;
      }
      for (int gidx = 0; gidx < cfg.grid_points; ++gidx) {
        const double t = static_cast<double>(gidx) / (cfg.grid_points - 1);
        const double cand = lo * std::pow(hi / lo, t);
        const double old = seq[i];
        seq[i] = cand;
        const double j = objective(seq);
        if (j < best_j) {
          best_j = j;
        } else {
          seq[i] = old;
        }
      }
    }
  };

  sweep(0.0);  // full-range pass
  for (int pass = 0; pass < cfg.refinement_passes; ++pass) sweep(4.0);
  return seq;
}

double feedback_step(ControllerState& state, double util, const MPCConfig& cfg,
                     const FeedbackConfig& fb) {
  const double err = (util - cfg.budget) / cfg.budget;
  state.integral = std::clamp(state.integral + err, -fb.integral_clamp, fb.integral_clamp);
  state.lambda = std::max(0.0, state.lambda + fb.k_p * err + fb.k_i * state.integral);
  return state.lambda;
}

std::string to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::mpc: return "mpc";
    case ControllerKind::feedback: return "feedback";
    case ControllerKind::binary_search: return "binary_search";
    case ControllerKind::static_lambda: return "static";
  }
  fail("to_string: bad controller");
}

ControllerKind controller_from_string(const std::string& s) {
  for (ControllerKind k : {ControllerKind::mpc, ControllerKind::feedback,
                           ControllerKind::binary_search, ControllerKind::static_lambda})
    if (to_string(k) == s) return k;
  fail("unknown controller: " + s);
}

double utilization_rate(std::span<const double> util, double budget) {
  require(!util.empty() && budget > 0.0, "utilization_rate: bad inputs");
  double acc = 0.0;
  for (double u : util) acc += std::min(u, budget) / budget;
  return acc / static_cast<double>(util.size());
}

double overutilization_rate(std::span<const double> util, double budget) {
  require(!util.empty() && budget > 0.0, "overutilization_rate: bad inputs");
  double acc = 0.0;
  for (double u : util) acc += (std::max(u, budget) - budget) / budget;
  return acc / static_cast<double>(util.size());
}

// ---------------------------------------------------------------------------
// closed loop
// ---------------------------------------------------------------------------

namespace {
struct IntervalOutcome {
  double util = 0.0;
  std::vector<std::vector<double>> q_rows, c_rows;
  std::size_t sample_n = 0;
};

IntervalOutcome serve_interval(const env::Env& e, const env::TrafficPoint& tp, double lambda,
                               const ClosedLoopConfig& cfg, const RequestTableFn& tables,
                               Rng& req_rng, bool keep_tables) {
  IntervalOutcome out;
  const std::size_t count = static_cast<std::size_t>(tp.request_count);
  const std::size_t sample_n = std::min(count, cfg.max_requests_per_interval);
  out.sample_n = sample_n;
  double cost_acc = 0.0;
  for (std::size_t r = 0; r < sample_n; ++r) {
    env::RequestContext s = e.sample_request(req_rng);
    s.timestamp_sec = tp.timestamp_sec;
    std::vector<double> qrow, crow;
    tables(s, qrow, crow);
    const int a = alloc::decide(qrow, crow, lambda);
    cost_acc += crow[static_cast<std::size_t>(a)];
    if (keep_tables) {
      out.q_rows.push_back(std::move(qrow));
      out.c_rows.push_back(std::move(crow));
    }
  }
  const double scale = static_cast<double>(count) / static_cast<double>(sample_n);
  out.util = cost_acc * scale / cfg.capacity_core_seconds;
  return out;
}
}  // namespace

ClosedLoopResult closed_loop_run(ControllerKind kind, const env::Env& e,
                                 const env::TrafficProfile& traffic, std::size_t intervals,
                                 const ClosedLoopConfig& cfg, const RequestTableFn& tables,
                                 const SystemModel* model) {
  require(intervals >= 1, "closed_loop_run: need at least one interval");
  if (kind == ControllerKind::mpc)
    require(model && model->fitted(), "closed_loop_run: MPC needs a fitted system model");

  const auto points = env::generate_traffic(traffic, intervals + static_cast<std::size_t>(
                                                                     cfg.mpc.horizon));
  Rng req_rng(derive_seed(cfg.seed, "closed_loop_requests"));

  ClosedLoopResult res;
  ControllerState state;
  state.lambda = kind == ControllerKind::static_lambda ? cfg.static_lambda : cfg.static_lambda;
  double util_prev = cfg.mpc.budget;  // neutral history before the first interval
  double util_last = cfg.mpc.budget;

  for (std::size_t t = 0; t < intervals; ++t) {
    const auto& tp = points[t];
    double lambda = state.lambda;

    if (kind == ControllerKind::mpc) {
      std::vector<StateForecast> fc(static_cast<std::size_t>(cfg.mpc.horizon));
      for (int i = 0; i < cfg.mpc.horizon; ++i) {
        const auto& fp = points[t + static_cast<std::size_t>(i)];
        const double w = 2.0 * 3.14159265358979323846 * fp.timestamp_sec / 86400.0;
        fc[static_cast<std::size_t>(i)].traffic =
            cfg.oracle_forecast ? static_cast<double>(fp.request_count)
                                : static_cast<double>(tp.request_count);
        fc[static_cast<std::size_t>(i)].tod_sin = std::sin(w);
        fc[static_cast<std::size_t>(i)].tod_cos = std::cos(w);
      }
      auto seq = solve_lambda_sequence(util_last, util_prev, fc, *model, cfg.mpc,
                                       state.last_solution);
      lambda = seq[0];  // receding horizon: only the first element is applied
      state.last_solution = std::move(seq);
      state.lambda = lambda;
    } else if (kind == ControllerKind::binary_search) {
      // DCAF-style: recompute λ against this interval's own demand
      IntervalOutcome probe = serve_interval(e, tp, 0.0, cfg, tables, req_rng, true);
      const double scale = static_cast<double>(tp.request_count) /
                           static_cast<double>(probe.sample_n);
      const double budget_cost = cfg.mpc.budget * cfg.capacity_core_seconds / scale;
      try {
        lambda = alloc::binary_search_lambda(probe.q_rows, probe.c_rows, budget_cost,
                                             0.0, cfg.mpc.lambda_max);
      } catch (const MarcaError&) {
        lambda = cfg.mpc.lambda_max;  // budget unreachable: maximum pressure
      }
      state.lambda = lambda;
      // reuse the probed tables for the actual decisions
      double cost_acc = 0.0;
      for (std::size_t r = 0; r < probe.q_rows.size(); ++r) {
        const int a = alloc::decide(probe.q_rows[r], probe.c_rows[r], lambda);
        cost_acc += probe.c_rows[r][static_cast<std::size_t>(a)];
      }
      const double util = cost_acc * scale / cfg.capacity_core_seconds;
      res.lambda_trace.push_back(lambda);
      res.predicted_util_trace.push_back(util);
      res.util_trace.push_back(util);
      res.traffic_trace.push_back(tp.request_count);
      util_prev = util_last;
      util_last = util;
      continue;
    }

    const IntervalOutcome out = serve_interval(e, tp, lambda, cfg, tables, req_rng, false);
    res.lambda_trace.push_back(lambda);
    res.util_trace.push_back(out.util);
    res.traffic_trace.push_back(tp.request_count);
    if (kind == ControllerKind::mpc && model) {
      const double w = 2.0 * 3.14159265358979323846 * tp.timestamp_sec / 86400.0;
      res.predicted_util_trace.push_back(model->predict(
          util_last, static_cast<double>(tp.request_count), std::sin(w), std::cos(w), lambda));
    } else {
      res.predicted_util_trace.push_back(out.util);
    }
    util_prev = util_last;
    util_last = out.util;

    if (kind == ControllerKind::feedback) feedback_step(state, out.util, cfg.mpc, cfg.feedback);
  }

  res.mu = utilization_rate(res.util_trace, cfg.mpc.budget);
  res.nu = overutilization_rate(res.util_trace, cfg.mpc.budget);
  return res;
}

std::vector<SystemTransition> collect_system_history(const env::Env& e,
                                                     const env::TrafficProfile& traffic,
                                                     std::size_t intervals,
                                                     const ClosedLoopConfig& cfg,
                                                     const RequestTableFn& tables) {
  const auto points = env::generate_traffic(traffic, intervals);
  Rng req_rng(derive_seed(cfg.seed, "history_requests"));
  Rng walk_rng(derive_seed(cfg.seed, "lambda_walk"));

  std::vector<SystemTransition> history;
  double lambda = std::sqrt(cfg.mpc.lambda_min * cfg.mpc.lambda_max);
  double util_prev = cfg.mpc.budget;
  for (std::size_t t = 0; t < intervals; ++t) {
    // multiplicative random walk keeps λ exploration positive and broad
    lambda = std::clamp(lambda * std::exp(0.5 * walk_rng.normal()), cfg.mpc.lambda_min,
                        cfg.mpc.lambda_max);
    const auto& tp = points[t];
    const IntervalOutcome out = serve_interval(e, tp, lambda, cfg, tables, req_rng, false);
    const double w = 2.0 * 3.14159265358979323846 * tp.timestamp_sec / 86400.0;
    SystemTransition tr;
    tr.util = util_prev;
    tr.traffic = static_cast<double>(tp.request_count);
    tr.tod_sin = std::sin(w);
    tr.tod_cos = std::cos(w);
    tr.lambda = lambda;
    tr.next_util = out.util;
    history.push_back(tr);
    util_prev = out.util;
  }
  return history;
}

std::string trace_csv(const ClosedLoopResult& r, double budget) {
  io::CsvWriter csv({"t", "traffic", "lambda", "predicted_util", "realized_util", "over_budget"});
  for (std::size_t t = 0; t < r.util_trace.size(); ++t) {
    csv.add_row({std::to_string(t), std::to_string(r.traffic_trace[t]),
                 io::format_double(r.lambda_trace[t]),
                 io::format_double(r.predicted_util_trace[t]),
                 io::format_double(r.util_trace[t]), r.util_trace[t] > budget ? "1" : "0"});
  }
  return csv.content();
}

}  // namespace marca::ctrl
