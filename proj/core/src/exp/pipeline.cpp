#include "marca/exp/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "marca/io.hpp"
#include "marca/metrics/metrics.hpp"

namespace marca::exp {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// method universe
// ---------------------------------------------------------------------------

namespace {
const std::vector<std::string> kMixerTags = {
    "awrq_mixer",        "awrq_mixer_wo_aw", "awrq_mixer_wo_smc", "awrq_mixer_wo_vgca",
    "awrq_mixer_k1",     "awrq_mixer_k20",   "awrq_mixer_g70",    "awrq_mixer_g80",
    "awrq_mixer_g99"};
const std::vector<std::string> kBaselineTags = {"dqn",  "ddqn", "drqn",          "avg_ensemble",
                                                "rem",  "vdn",  "weighted_qmix", "qmix"};
}  // namespace

bool is_mixer_family(const std::string& tag) {
  return std::find(kMixerTags.begin(), kMixerTags.end(), tag) != kMixerTags.end();
}

bool is_known_method(const std::string& tag) {
  return is_mixer_family(tag) ||
         std::find(kBaselineTags.begin(), kBaselineTags.end(), tag) != kBaselineTags.end();
}

std::vector<std::string> all_method_tags() {
  std::vector<std::string> out = kMixerTags;
  out.insert(out.end(), kBaselineTags.begin(), kBaselineTags.end());
  return out;
}

rl::TrainerConfig mixer_config_for(const ExperimentConfig& cfg, const std::string& tag,
                                   std::uint64_t seed) {
  require(is_mixer_family(tag), "mixer_config_for: " + tag + " is not a mixer-family method");
  rl::TrainerConfig t = cfg.trainer;
  t.seed = seed;
  if (tag == "awrq_mixer_wo_aw") t.adaptive_weighting = false;
  if (tag == "awrq_mixer_wo_smc") t.mixer.transform = rl::MixTransform::abs_value;
  if (tag == "awrq_mixer_wo_vgca") t.vgca = false;
  if (tag == "awrq_mixer_k1") t.awrq.ensemble_size = 1;
  if (tag == "awrq_mixer_k20") t.awrq.ensemble_size = 20;
  if (tag == "awrq_mixer_g70") t.awrq.gamma = 0.7;
  if (tag == "awrq_mixer_g80") t.awrq.gamma = 0.8;
  if (tag == "awrq_mixer_g99") t.awrq.gamma = 0.99;
  return t;
}

rl::BaselineConfig baseline_config_for(const ExperimentConfig& cfg, const std::string& tag,
                                       std::uint64_t seed) {
  rl::BaselineConfig b = cfg.baseline;
  b.method = rl::method_from_string(tag);
  b.seed = seed;
  return b;
}

// ---------------------------------------------------------------------------
// evaluation protocol
// ---------------------------------------------------------------------------

EvalContext build_eval_context(const env::Env& e, const env::LoggedDataset& ds,
                               const alloc::GroundTruthModel& gt, std::size_t request_cap) {
  require(!ds.test_idx.empty(), "build_eval_context: empty test split");
  EvalContext ctx;
  ctx.request_idx = ds.test_idx;
  if (request_cap > 0 && ctx.request_idx.size() > request_cap)
    ctx.request_idx.resize(request_cap);

  ctx.quota = alloc::quota_from_frequencies(e, ds, ctx.request_idx);
  ctx.gt_q.reserve(ctx.request_idx.size());
  ctx.latent_at_logged.reserve(ctx.request_idx.size());
  ctx.logged_flat.reserve(ctx.request_idx.size());
  for (std::size_t i : ctx.request_idx) {
    const auto& ep = ds.episodes[i];
    ctx.gt_q.push_back(gt.predict_all(e, ep.ctx));
    ctx.latent_at_logged.push_back(e.latent_revenue(ep.ctx, ep.actions));
    ctx.logged_flat.push_back(e.actions().encode(ep.actions));
  }
  ctx.gt_plan = alloc::greedy_allocate(ctx.gt_q, ctx.quota);
  return ctx;
}

MethodEval evaluate_joint_q(const env::Env&, const env::LoggedDataset& ds,
                            const EvalContext& ctx, const JointQFn& fn) {
  std::vector<std::vector<double>> pred(ctx.request_idx.size());
  std::vector<double> pred_at_logged(ctx.request_idx.size());
  for (std::size_t r = 0; r < ctx.request_idx.size(); ++r) {
    pred[r] = fn(ds.episodes[ctx.request_idx[r]].ctx);
    pred_at_logged[r] = pred[r][static_cast<std::size_t>(ctx.logged_flat[r])];
  }
  MethodEval ev;
  ev.rs = metrics::spearman_rs(pred_at_logged, ctx.latent_at_logged);
  const auto plan = alloc::greedy_allocate(pred, ctx.quota);
  ev.return_pct = alloc::return_percent(plan, ctx.gt_plan, ctx.gt_q);
  return ev;
}

std::function<double(const JointQFn&)> make_val_metric(const env::Env& e,
                                                       const env::LoggedDataset& ds,
                                                       const EvalContext& val_ctx) {
  return [&e, &ds, &val_ctx](const JointQFn& fn) {
    return evaluate_joint_q(e, ds, val_ctx, fn).return_pct;
  };
}

// ---------------------------------------------------------------------------
// shared loaders
// ---------------------------------------------------------------------------

env::Env load_env(const ExperimentConfig& cfg) { return env::Env(cfg.env); }

env::LoggedDataset load_dataset_checked(const ExperimentConfig& cfg, const env::Env& e) {
  Workspace ws{cfg.resolved_output_dir()};
  require(io::file_exists(ws.dataset_path()),
          "dataset not found at " + ws.dataset_path().string() + "; run gen-data first");
  return env::load_dataset(ws.dataset_path(), e);
}

cost::CostModel load_cost_model(const ExperimentConfig& cfg) {
  Workspace ws{cfg.resolved_output_dir()};
  require(io::file_exists(ws.costmodel_path()),
          "cost model not found at " + ws.costmodel_path().string() + "; run bench-cost first");
  return cost::CostModel::from_json(io::read_file(ws.costmodel_path()));
}

alloc::GroundTruthModel load_or_train_gt(const ExperimentConfig& cfg, const env::Env& e,
                                         const env::LoggedDataset& ds) {
  Workspace ws{cfg.resolved_output_dir()};
  if (io::file_exists(ws.gt_model_path()))
    return alloc::GroundTruthModel::from_checkpoint(nn::Checkpoint::load(ws.gt_model_path()));
  alloc::GroundTruthModel gt;
  gt.train(e, ds, cfg.gt);
  gt.to_checkpoint().save(ws.gt_model_path());
  return gt;
}

ctrl::RequestTableFn make_request_tables(const env::Env& e, const rl::MixerModel& model,
                                         const cost::CostModel& cm,
                                         const cost::ActionResultPredictor& pred) {
  const int A = e.actions().joint_count();
  return [&e, &model, &cm, &pred, A](const env::RequestContext& s, std::vector<double>& q_row,
                                     std::vector<double>& c_row) {
    q_row = model.joint_q(e, s);
    c_row.resize(static_cast<std::size_t>(A));
    for (int flat = 0; flat < A; ++flat) {
      const env::JointAction a = e.actions().decode(flat);
      const auto lengths = pred.predict(e, s, a);
      c_row[static_cast<std::size_t>(flat)] = cost::estimate_cost(s, a, cm, e.actions(), lengths);
    }
  };
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

void cmd_gen_data(const ExperimentConfig& cfg, bool force) {
  Workspace ws{cfg.resolved_output_dir()};
  if (io::file_exists(ws.dataset_path()) && !force)
    fail("gen-data: " + ws.dataset_path().string() + " exists; pass --force to overwrite");

  env::Env e = load_env(cfg);
  const auto policy = env::logging_policy_from_string(cfg.policy);
  env::LoggedDataset ds = env::build_logged_dataset(e, policy, cfg.n_requests, cfg.data_seed,
                                                    cfg.policy_epsilon, cfg.test_fraction);
  save_dataset(ds, ws.dataset_path());

  const auto stats = ds.stats(e);
  ordered_json manifest;
  manifest["config_hash"] = hash_hex(cfg.content_hash());
  manifest["env_hash"] = hash_hex(e.config().content_hash());
  manifest["seed"] = cfg.data_seed;
  manifest["policy"] = cfg.policy;
  manifest["n_requests"] = cfg.n_requests;
  manifest["dataset_hash"] = hash_hex(io::hash_file(ws.dataset_path()));
  manifest["n_train"] = stats.n_train;
  manifest["n_test"] = stats.n_test;
  manifest["reward_mean"] = stats.reward_mean;
  manifest["reward_std"] = stats.reward_std;
  manifest["joint_action_counts"] = stats.joint_action_counts;
  io::atomic_write(ws.dataset_manifest(), manifest.dump(2));
}

// ---------------------------------------------------------------------------
// bench-cost
// ---------------------------------------------------------------------------

void cmd_bench_cost(const ExperimentConfig& cfg, bool force) {
  Workspace ws{cfg.resolved_output_dir()};
  if (io::file_exists(ws.costmodel_path()) && !force)
    fail("bench-cost: " + ws.costmodel_path().string() + " exists; pass --force to overwrite");

  env::Env e = load_env(cfg);
  cost::BenchOutput out = cost::run_bench(e, cfg.bench);
  io::atomic_write(ws.costmodel_path(), out.model.to_json());
  io::atomic_write(ws.loadtests_csv(), cost::raw_results_csv(out.raw_results));

  // action-result predictor rides along with the bench artifacts
  env::LoggedDataset ds = load_dataset_checked(cfg, e);
  cost::ActionResultPredictor pred;
  pred.train(e, ds, cfg.predictor);
  const double model_mse = pred.mse(e, ds, ds.test_idx);
  const double base_mse =
      cost::ActionResultPredictor::constant_mean_mse(e, ds, ds.train_idx, ds.test_idx);
  // predictor parameters are rebuilt deterministically from config at load
  // time; the manifest records its quality
  ordered_json manifest;
  manifest["config_hash"] = hash_hex(cfg.content_hash());
  manifest["env_hash"] = hash_hex(e.config().content_hash());
  manifest["bench_seed"] = cfg.bench.seed;
  manifest["qps_reductions"] = out.qps_reductions;
  manifest["costmodel_hash"] = hash_hex(io::hash_file(ws.costmodel_path()));
  manifest["predictor_mse"] = model_mse;
  manifest["constant_mean_mse"] = base_mse;
  io::atomic_write(ws.bench_manifest(), manifest.dump(2));
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

namespace {
struct TrainJob {
  std::string method;
  std::uint64_t seed;
};

void write_run_outputs(const Workspace& ws, const std::string& method, std::uint64_t seed,
                       const std::string& train_log, const std::string& val_log,
                       const std::string& timing, const nn::Checkpoint& final_ckpt,
                       const ExperimentConfig& cfg, std::uint64_t dataset_hash) {
  const fs::path dir = ws.run_dir(method, seed);
  final_ckpt.save(dir / "checkpoint_final.json");
  io::atomic_write(dir / "train_log.csv", train_log);
  io::atomic_write(dir / "val_log.csv", val_log);
  io::atomic_write(dir / "timing.csv", timing);
  ordered_json manifest;
  manifest["method"] = method;
  manifest["seed"] = seed;
  manifest["config_hash"] = hash_hex(cfg.content_hash());
  manifest["dataset_hash"] = hash_hex(dataset_hash);
  manifest["checkpoint_hash"] = hash_hex(io::hash_file(dir / "checkpoint_final.json"));
  io::atomic_write(dir / "manifest.json", manifest.dump(2));
}

void train_one(const ExperimentConfig& cfg, const env::Env& e, const env::LoggedDataset& ds,
               const EvalContext& val_ctx, const TrainJob& job, bool force,
               std::uint64_t dataset_hash) {
  Workspace ws{cfg.resolved_output_dir()};
  const fs::path dir = ws.run_dir(job.method, job.seed);
  const fs::path final_path = dir / "checkpoint_final.json";
  const fs::path latest_path = dir / "checkpoint_latest.json";
  if (io::file_exists(final_path) && !force) return;

  if (is_mixer_family(job.method)) {
    rl::TrainerConfig tcfg = mixer_config_for(cfg, job.method, job.seed);
    std::optional<rl::MixerTrainer> trainer;
    if (io::file_exists(latest_path) && !force)
      trainer.emplace(e, ds, latest_path);
    else
      trainer.emplace(e, ds, tcfg);
    trainer->set_checkpoint_dir(dir);
    trainer->set_eval_fn([&e, &ds, &val_ctx](const rl::MixerModel& m) {
      JointQFn fn = [&e, &m](const env::RequestContext& s) { return m.joint_q(e, s); };
      return evaluate_joint_q(e, ds, val_ctx, fn).return_pct;
    });
    rl::TrainResult res = trainer->train();
    nn::Checkpoint final_ckpt = trainer->model().to_checkpoint();
    final_ckpt.put_meta("method", job.method);
    final_ckpt.put_array("log/grad_norms", {res.grad_norms.size()}, res.grad_norms);
    std::vector<double> flat;
    for (const auto& p : res.val_curve) {
      flat.push_back(p.env_steps);
      flat.push_back(p.value);
    }
    final_ckpt.put_array("log/val_curve", {res.val_curve.size(), 2}, flat);
    write_run_outputs(ws, job.method, job.seed, res.train_log_csv, res.val_log_csv,
                      res.timing_csv, final_ckpt, cfg, dataset_hash);
  } else {
    rl::BaselineConfig bcfg = baseline_config_for(cfg, job.method, job.seed);
    std::optional<rl::BaselineTrainer> trainer;
    if (io::file_exists(latest_path) && !force)
      trainer.emplace(e, ds, latest_path);
    else
      trainer.emplace(e, ds, bcfg);
    trainer->set_checkpoint_dir(dir);
    trainer->set_eval_fn([&e, &ds, &val_ctx](const rl::BaselineModel& m) {
      JointQFn fn = [&e, &m](const env::RequestContext& s) { return m.joint_q(e, s); };
      return evaluate_joint_q(e, ds, val_ctx, fn).return_pct;
    });
    rl::BaselineTrainer::Result res = trainer->train();
    nn::Checkpoint final_ckpt = trainer->model().to_checkpoint();
    final_ckpt.put_meta("method", job.method);
    final_ckpt.put_array("log/grad_norms", {res.grad_norms.size()}, res.grad_norms);
    std::vector<double> flat;
    for (const auto& p : res.val_curve) {
      flat.push_back(p.env_steps);
      flat.push_back(p.value);
    }
    final_ckpt.put_array("log/val_curve", {res.val_curve.size(), 2}, flat);
    write_run_outputs(ws, job.method, job.seed, res.train_log_csv, res.val_log_csv,
                      res.timing_csv, final_ckpt, cfg, dataset_hash);
  }
}
}  // namespace

void cmd_train(const ExperimentConfig& cfg, const std::vector<std::string>& methods, bool force) {
  const std::vector<std::string>& which = methods.empty() ? cfg.methods : methods;
  for (const auto& m : which)
    require(is_known_method(m), "train: unknown method tag \"" + m + "\"");

  env::Env e = load_env(cfg);
  env::LoggedDataset ds = load_dataset_checked(cfg, e);
  const std::uint64_t dataset_hash = env::dataset_content_hash(ds);
  alloc::GroundTruthModel gt = load_or_train_gt(cfg, e, ds);
  EvalContext val_ctx = build_eval_context(e, ds, gt, cfg.val_requests);

  std::vector<TrainJob> jobs;
  for (const auto& m : which)
    for (std::uint64_t s : cfg.seeds) jobs.push_back({m, s});

  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors;
  std::mutex err_mu;
  const int workers = std::max(1, cfg.workers);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= jobs.size()) return;
        try {
          train_one(cfg, e, ds, val_ctx, jobs[i], force, dataset_hash);
        } catch (const std::exception& ex) {
          std::lock_guard<std::mutex> lock(err_mu);
          errors.push_back(jobs[i].method + " seed " + std::to_string(jobs[i].seed) + ": " +
                           ex.what());
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (!errors.empty()) {
    std::string msg = "train: " + std::to_string(errors.size()) + " run(s) failed:";
    for (const auto& e2 : errors) msg += "\n  " + e2;
    fail(msg);
  }
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

namespace {
JointQFn joint_q_for_checkpoint(const env::Env& e, const nn::Checkpoint& ckpt,
                                std::shared_ptr<void>& keepalive) {
  if (ckpt.meta("kind") == "mixer_model") {
    auto model = std::make_shared<rl::MixerModel>(rl::MixerModel::from_checkpoint(ckpt, e));
    keepalive = model;
    return [&e, model](const env::RequestContext& s) { return model->joint_q(e, s); };
  }
  auto model = std::make_shared<rl::BaselineModel>(rl::BaselineModel::from_checkpoint(ckpt, e));
  keepalive = model;
  return [&e, model](const env::RequestContext& s) { return model->joint_q(e, s); };
}

std::vector<rl::ValPoint> val_curve_from_checkpoint(const nn::Checkpoint& ckpt) {
  std::vector<rl::ValPoint> out;
  const auto& arr = ckpt.array("log/val_curve");
  for (std::size_t i = 0; i + 1 < arr.data.size(); i += 2)
    out.push_back({arr.data[i], arr.data[i + 1]});
  return out;
}
}  // namespace

void cmd_evaluate(const ExperimentConfig& cfg) {
  Workspace ws{cfg.resolved_output_dir()};
  env::Env e = load_env(cfg);
  env::LoggedDataset ds = load_dataset_checked(cfg, e);
  alloc::GroundTruthModel gt = load_or_train_gt(cfg, e, ds);
  EvalContext ctx = build_eval_context(e, ds, gt, cfg.eval_requests_cap);

  // ground-truth quality gate for the protocol itself
  MethodEval gt_eval = evaluate_joint_q(e, ds, ctx, [&](const env::RequestContext& s) {
    return gt.predict_all(e, s);
  });

  std::vector<std::string> missing;
  std::vector<RunSummary> rows;
  for (const auto& method : cfg.methods) {
    for (std::uint64_t seed : cfg.seeds) {
      const fs::path ckpt_path = ws.run_dir(method, seed) / "checkpoint_final.json";
      if (!io::file_exists(ckpt_path)) {
        missing.push_back(method + " seed " + std::to_string(seed));
        continue;
      }
      nn::Checkpoint ckpt = nn::Checkpoint::load(ckpt_path);
      std::shared_ptr<void> keepalive;
      JointQFn fn = joint_q_for_checkpoint(e, ckpt, keepalive);
      MethodEval ev = evaluate_joint_q(e, ds, ctx, fn);
      RunSummary row;
      row.method = method;
      row.seed = seed;
      row.rs = ev.rs;
      row.return_pct = ev.return_pct;
      const auto curve = val_curve_from_checkpoint(ckpt);
      if (curve.size() >= 2) {
        std::vector<double> xs, ys;
        for (const auto& p : curve) {
          xs.push_back(p.env_steps);
          ys.push_back(p.value);
        }
        const auto conv = metrics::convergence_steps(xs, ys);
        row.convergence_steps = conv.steps;
        row.convergence_reached = conv.reached;
      }
      if (ckpt.has_array("log/grad_norms")) {
        const auto& norms = ckpt.array("log/grad_norms").data;
        const std::size_t window =
            std::min<std::size_t>(norms.size(),
                                  static_cast<std::size_t>(cfg.trainer.grad_variance_window));
        if (window >= 2 && norms.size() >= window) {
          row.grad_variance = metrics::gradient_variance(norms, window);
          row.has_grad_variance = true;
        }
      }
      rows.push_back(row);
    }
  }
  if (!missing.empty()) {
    std::string msg = "evaluate: missing checkpoints for:";
    for (const auto& m : missing) msg += " [" + m + "]";
    fail(msg);
  }

  io::CsvWriter csv({"method", "seed", "rs", "return_pct", "convergence_steps",
                     "convergence_reached", "grad_variance"});
  for (const auto& r : rows) {
    csv.add_row({r.method, std::to_string(r.seed), io::format_double(r.rs),
                 io::format_double(r.return_pct), io::format_double(r.convergence_steps),
                 r.convergence_reached ? "1" : "0",
                 r.has_grad_variance ? io::format_double(r.grad_variance) : ""});
  }
  csv.write(ws.eval_dir() / "per_seed.csv");

  ordered_json report;
  report["config_hash"] = hash_hex(cfg.content_hash());
  report["ground_truth"]["rs_vs_latent"] = gt_eval.rs;
  report["ground_truth"]["return_pct_self"] = gt_eval.return_pct;
  ordered_json methods = ordered_json::object();
  for (const auto& method : cfg.methods) {
    std::vector<double> rs, rp, conv, gv;
    for (const auto& r : rows) {
      if (r.method != method) continue;
      rs.push_back(r.rs);
      rp.push_back(r.return_pct);
      conv.push_back(r.convergence_steps);
      if (r.has_grad_variance) gv.push_back(r.grad_variance);
    }
    if (rs.empty()) continue;
    ordered_json jm;
    const auto rs_rep = metrics::aggregate("rs", rs);
    const auto rp_rep = metrics::aggregate("return_pct", rp);
    jm["rs_mean"] = rs_rep.mean;
    jm["rs_std"] = rs_rep.dispersion;
    jm["return_pct_mean"] = rp_rep.mean;
    jm["return_pct_std"] = rp_rep.dispersion;
    if (!conv.empty()) {
      const auto c_rep = metrics::aggregate("conv", conv);
      jm["convergence_steps_mean"] = c_rep.mean;
      jm["convergence_steps_std"] = c_rep.dispersion;
    }
    if (!gv.empty()) {
      const auto g_rep = metrics::aggregate("gv", gv);
      jm["grad_variance_mean"] = g_rep.mean;
      jm["grad_variance_std"] = g_rep.dispersion;
    }
    jm["seeds"] = cfg.seeds;
    methods[method] = jm;
  }
  report["methods"] = methods;
  io::atomic_write(ws.eval_dir() / "report.json", report.dump(2));
}

// ---------------------------------------------------------------------------
// allocate
// ---------------------------------------------------------------------------

void cmd_allocate(const ExperimentConfig& cfg, const std::string& method, std::uint64_t seed) {
  Workspace ws{cfg.resolved_output_dir()};
  env::Env e = load_env(cfg);
  env::LoggedDataset ds = load_dataset_checked(cfg, e);
  alloc::GroundTruthModel gt = load_or_train_gt(cfg, e, ds);
  cost::CostModel cm = load_cost_model(cfg);
  EvalContext ctx = build_eval_context(e, ds, gt, cfg.eval_requests_cap);

  const fs::path ckpt_path = ws.run_dir(method, seed) / "checkpoint_final.json";
  require(io::file_exists(ckpt_path), "allocate: missing checkpoint " + ckpt_path.string());
  nn::Checkpoint ckpt = nn::Checkpoint::load(ckpt_path);
  std::shared_ptr<void> keepalive;
  JointQFn fn = joint_q_for_checkpoint(e, ckpt, keepalive);

  const int A = e.actions().joint_count();
  std::vector<std::vector<double>> pred(ctx.request_idx.size());
  std::vector<std::vector<double>> latent(ctx.request_idx.size());
  std::vector<std::vector<double>> costs(ctx.request_idx.size());
  for (std::size_t r = 0; r < ctx.request_idx.size(); ++r) {
    const auto& s = ds.episodes[ctx.request_idx[r]].ctx;
    pred[r] = fn(s);
    latent[r].resize(static_cast<std::size_t>(A));
    costs[r].resize(static_cast<std::size_t>(A));
    for (int flat = 0; flat < A; ++flat) {
      const env::JointAction a = e.actions().decode(flat);
      latent[r][static_cast<std::size_t>(flat)] = e.latent_revenue(s, a);
      costs[r][static_cast<std::size_t>(flat)] =
          cost::estimate_cost(s, a, cm, e.actions(), cost::nominal_lengths(e.config(), a));
    }
  }
  const auto plan = alloc::greedy_allocate(pred, ctx.quota);
  const double ret = alloc::return_percent(plan, ctx.gt_plan, ctx.gt_q);

  std::vector<double> pred_at_logged(ctx.request_idx.size());
  for (std::size_t r = 0; r < ctx.request_idx.size(); ++r)
    pred_at_logged[r] = pred[r][static_cast<std::size_t>(ctx.logged_flat[r])];
  const double rs = metrics::spearman_rs(pred_at_logged, ctx.latent_at_logged);

  io::atomic_write(ws.eval_dir() / ("plan_" + method + "_seed" + std::to_string(seed) + ".csv"),
                   alloc::plan_csv(e, ctx.request_idx, plan, pred, latent, costs));
  ordered_json summary;
  summary["method"] = method;
  summary["seed"] = seed;
  summary["return_pct"] = ret;
  summary["rs"] = rs;
  summary["predicted_total"] = plan.predicted_total;
  summary["plan_cost_total"] = alloc::plan_cost(costs, plan.assigned);
  summary["requests"] = ctx.request_idx.size();
  io::atomic_write(
      ws.eval_dir() / ("allocation_" + method + "_seed" + std::to_string(seed) + ".json"),
      summary.dump(2));
}

// ---------------------------------------------------------------------------
// control
// ---------------------------------------------------------------------------

void cmd_control(const ExperimentConfig& cfg, bool run_sweeps) {
  Workspace ws{cfg.resolved_output_dir()};
  env::Env e = load_env(cfg);
  env::LoggedDataset ds = load_dataset_checked(cfg, e);
  cost::CostModel cm = load_cost_model(cfg);

  cost::ActionResultPredictor pred;
  pred.train(e, ds, cfg.predictor);

  ordered_json summary;
  summary["config_hash"] = hash_hex(cfg.content_hash());
  ordered_json per_controller = ordered_json::object();

  std::map<std::string, std::vector<double>> mu_by_controller, nu_by_controller;

  for (std::uint64_t seed : cfg.seeds) {
    const fs::path ckpt_path = ws.run_dir("awrq_mixer", seed) / "checkpoint_final.json";
    require(io::file_exists(ckpt_path),
            "control: missing trained awrq_mixer checkpoint for seed " + std::to_string(seed));
    rl::MixerModel model = rl::MixerModel::from_checkpoint(nn::Checkpoint::load(ckpt_path), e);
    ctrl::RequestTableFn tables = make_request_tables(e, model, cm, pred);

    ctrl::ClosedLoopConfig ccfg = cfg.control;
    ccfg.seed = derive_seed(cfg.control.seed, seed);
    env::TrafficProfile traffic = cfg.traffic;
    traffic.seed = derive_seed(cfg.traffic.seed, seed);

    ctrl::SystemModel sys;
    {
      auto history = ctrl::collect_system_history(e, traffic, cfg.history_intervals, ccfg, tables);
      ctrl::SystemModelConfig scfg = cfg.sysmodel;
      scfg.seed = derive_seed(cfg.sysmodel.seed, seed);
      sys.fit(history, scfg);
    }

    for (const auto& name : cfg.controllers) {
      const auto kind = ctrl::controller_from_string(name);
      const auto res = ctrl::closed_loop_run(kind, e, traffic, cfg.control_intervals, ccfg,
                                             tables, &sys);
      io::atomic_write(ws.control_dir() /
                           ("trace_" + name + "_seed" + std::to_string(seed) + ".csv"),
                       ctrl::trace_csv(res, ccfg.mpc.budget));
      mu_by_controller[name].push_back(res.mu);
      nu_by_controller[name].push_back(res.nu);
    }
  }

  for (const auto& [name, mus] : mu_by_controller) {
    const auto mu_rep = metrics::aggregate("mu", mus);
    const auto nu_rep = metrics::aggregate("nu", nu_by_controller[name]);
    ordered_json jc;
    jc["mu_mean"] = mu_rep.mean;
    jc["mu_std"] = mu_rep.dispersion;
    jc["nu_mean"] = nu_rep.mean;
    jc["nu_std"] = nu_rep.dispersion;
    jc["mu_per_seed"] = mu_rep.per_seed;
    jc["nu_per_seed"] = nu_rep.per_seed;
    per_controller[name] = jc;
  }
  summary["controllers"] = per_controller;
  io::atomic_write(ws.control_dir() / "summary.json", summary.dump(2));

  if (run_sweeps) {
    // Figure-5 style sweeps, first seed only: vary one knob, hold the rest
    const std::uint64_t seed = cfg.seeds.front();
    const fs::path ckpt_path = ws.run_dir("awrq_mixer", seed) / "checkpoint_final.json";
    rl::MixerModel model = rl::MixerModel::from_checkpoint(nn::Checkpoint::load(ckpt_path), e);
    ctrl::RequestTableFn tables = make_request_tables(e, model, cm, pred);
    env::TrafficProfile traffic = cfg.traffic;
    traffic.seed = derive_seed(cfg.traffic.seed, seed);
    ctrl::ClosedLoopConfig base = cfg.control;
    base.seed = derive_seed(cfg.control.seed, seed);
    ctrl::SystemModel sys;
    {
      auto history = ctrl::collect_system_history(e, traffic, cfg.history_intervals, base, tables);
      sys.fit(history, cfg.sysmodel);
    }
    io::CsvWriter sweep({"knob", "value", "mu", "nu"});
    auto run_with = [&](const std::string& knob, double value, ctrl::ClosedLoopConfig c) {
      const auto res = ctrl::closed_loop_run(ctrl::ControllerKind::mpc, e, traffic,
                                             cfg.sweep_intervals, c, tables, &sys);
      sweep.add_row({knob, io::format_double(value), io::format_double(res.mu),
                     io::format_double(res.nu)});
    };
    for (double a : cfg.sweep_alpha) {
      ctrl::ClosedLoopConfig c = base;
      c.mpc.alpha = a;
      run_with("alpha", a, c);
    }
    for (double b : cfg.sweep_beta) {
      ctrl::ClosedLoopConfig c = base;
      c.mpc.beta = b;
      run_with("beta", b, c);
    }
    for (int n : cfg.sweep_horizon) {
      ctrl::ClosedLoopConfig c = base;
      c.mpc.horizon = n;
      run_with("horizon", static_cast<double>(n), c);
    }
    sweep.write(ws.control_dir() / "sweep.csv");
  }
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

void cmd_report(const ExperimentConfig& cfg) {
  Workspace ws{cfg.resolved_output_dir()};
  std::string md;
  md += "# MaRCA experiment report\n\n";
  md += "config hash: " + hash_hex(cfg.content_hash()) + "\n\n";

  if (io::file_exists(ws.eval_dir() / "report.json")) {
    ordered_json rep = ordered_json::parse(io::read_file(ws.eval_dir() / "report.json"));
    md += "## Offline evaluation (r_s / Return%)\n\n";
    md += "ground-truth ensemble r_s vs latent: " +
          io::format_double(rep["ground_truth"]["rs_vs_latent"].get<double>()) + "\n\n";
    md += "| method | r_s | Return% | convergence steps | gradient variance |\n";
    md += "|---|---|---|---|---|\n";
    for (const auto& [name, jm] : rep["methods"].items()) {
      auto cell = [&jm](const char* mean_key, const char* std_key) -> std::string {
        if (!jm.contains(mean_key)) return "-";
        std::string s = io::format_double(jm[mean_key].get<double>());
        if (jm.contains(std_key))
          s += " (±" + io::format_double(jm[std_key].get<double>()) + ")";
        return s;
      };
      md += "| " + name + " | " + cell("rs_mean", "rs_std") + " | " +
            cell("return_pct_mean", "return_pct_std") + " | " +
            cell("convergence_steps_mean", "convergence_steps_std") + " | " +
            cell("grad_variance_mean", "grad_variance_std") + " |\n";
    }
    md += "\n";
  } else {
    md += "## Offline evaluation\n\n(not run)\n\n";
  }

  if (io::file_exists(ws.control_dir() / "summary.json")) {
    ordered_json rep = ordered_json::parse(io::read_file(ws.control_dir() / "summary.json"));
    md += "## Revenue-cost balancing (μ / ν)\n\n";
    md += "| controller | utilization μ | overutilization ν |\n|---|---|---|\n";
    for (const auto& [name, jc] : rep["controllers"].items()) {
      md += "| " + name + " | " + io::format_double(jc["mu_mean"].get<double>()) + " (±" +
            io::format_double(jc["mu_std"].get<double>()) + ") | " +
            io::format_double(jc["nu_mean"].get<double>()) + " (±" +
            io::format_double(jc["nu_std"].get<double>()) + ") |\n";
    }
    md += "\n";
  } else {
    md += "## Revenue-cost balancing\n\n(not run)\n\n";
  }

  if (io::file_exists(ws.control_dir() / "sweep.csv")) {
    md += "Hyperparameter sweep data: control/sweep.csv\n\n";
  }
  io::atomic_write(ws.report_dir() / "report.md", md);
}

}  // namespace marca::exp
