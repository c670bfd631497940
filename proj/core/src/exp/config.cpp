#include "marca/exp/config.hpp"

#include <cstdlib>
#include <set>

#include <json.hpp>

#include "marca/io.hpp"

namespace marca::exp {

using ordered_json = nlohmann::ordered_json;

namespace {
void check_keys(const ordered_json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k))
      fail("config: unknown key \"" + k + "\" in " + where);
  }
}

template <class T>
void opt(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}
}  // namespace

ExperimentConfig ExperimentConfig::desk_defaults() { return ExperimentConfig{}; }

void ExperimentConfig::apply_profile() {
  if (profile == "desk") return;
  require(profile == "paper-faithful", "config: profile must be desk or paper-faithful");
  trainer.awrq.ensemble_size = 20;
  trainer.awrq.gru_hidden = 256;
  trainer.awrq.mlp_hidden = {512, 256};
  trainer.batch_size = 2048;
  trainer.iterations = 20000;
  baseline.ensemble_size = 20;
  baseline.gru_hidden = 256;
  baseline.mlp_hidden = {512, 256};
  baseline.batch_size = 2048;
  baseline.iterations = 20000;
}

std::string ExperimentConfig::to_json() const {
  ordered_json j;
  j["profile"] = profile;
  ordered_json je;
  je["seed"] = env.seed;
  je["feature_dim"] = env.feature_dim;
  je["n_tiers"] = env.n_tiers;
  je["n_platforms"] = env.n_platforms;
  je["channel_subsets"] = env.channel_subsets;
  je["prerank_truncations"] = env.prerank_truncations;
  ordered_json ra = ordered_json::array();
  for (const auto& r : env.ranking_actions) ra.push_back({r.model_level, r.truncation});
  je["ranking_actions"] = ra;
  je["reward_noise_frac"] = env.reward_noise_frac;
  j["env"] = je;

  ordered_json jd;
  jd["n_requests"] = n_requests;
  jd["policy"] = policy;
  jd["epsilon"] = policy_epsilon;
  jd["seed"] = data_seed;
  jd["test_fraction"] = test_fraction;
  j["dataset"] = jd;

  ordered_json jb;
  jb["queue_length_grid"] = bench.queue_length_grid;
  jb["qps"] = bench.qps;
  jb["n_machines"] = bench.n_machines;
  jb["cores"] = bench.cores;
  jb["noise_pct"] = bench.noise_pct;
  jb["repeats"] = bench.repeats;
  jb["seed"] = bench.seed;
  j["bench"] = jb;

  ordered_json jp;
  jp["iterations"] = predictor.iterations;
  jp["batch_size"] = predictor.batch_size;
  jp["lr"] = predictor.lr;
  jp["seed"] = predictor.seed;
  j["predictor"] = jp;

  ordered_json jg;
  jg["members"] = gt.members;
  jg["hidden"] = gt.hidden;
  jg["iterations"] = gt.iterations;
  jg["batch_size"] = gt.batch_size;
  jg["lr"] = gt.lr;
  jg["seed"] = gt.seed;
  j["ground_truth"] = jg;

  j["trainer"] = ordered_json::parse(trainer.to_json());
  j["baseline"] = ordered_json::parse(baseline.to_json());
  j["methods"] = methods;
  j["seeds"] = seeds;

  ordered_json jt;
  jt["base_count"] = traffic.base_count;
  jt["diurnal_amplitude"] = traffic.diurnal_amplitude;
  jt["noise_scale"] = traffic.noise_scale;
  jt["step_seconds"] = traffic.step_seconds;
  jt["start_sec"] = traffic.start_sec;
  jt["seed"] = traffic.seed;
  ordered_json jbursts = ordered_json::array();
  for (const auto& b : traffic.bursts)
    jbursts.push_back({b.start_step, b.duration_steps, b.multiplier});
  jt["bursts"] = jbursts;
  j["traffic"] = jt;

  ordered_json jc;
  jc["horizon"] = control.mpc.horizon;
  jc["alpha"] = control.mpc.alpha;
  jc["beta"] = control.mpc.beta;
  jc["budget"] = control.mpc.budget;
  jc["lambda_min"] = control.mpc.lambda_min;
  jc["lambda_max"] = control.mpc.lambda_max;
  jc["grid_points"] = control.mpc.grid_points;
  jc["refinement_passes"] = control.mpc.refinement_passes;
  jc["feedback_kp"] = control.feedback.k_p;
  jc["feedback_ki"] = control.feedback.k_i;
  jc["static_lambda"] = control.static_lambda;
  jc["capacity_core_seconds"] = control.capacity_core_seconds;
  jc["max_requests_per_interval"] = control.max_requests_per_interval;
  jc["oracle_forecast"] = control.oracle_forecast;
  jc["seed"] = control.seed;
  jc["intervals"] = control_intervals;
  jc["history_intervals"] = history_intervals;
  jc["sweep_intervals"] = sweep_intervals;
  jc["controllers"] = controllers;
  jc["sweep_alpha"] = sweep_alpha;
  jc["sweep_beta"] = sweep_beta;
  jc["sweep_horizon"] = sweep_horizon;
  j["control"] = jc;

  ordered_json jv;
  jv["eval_requests_cap"] = eval_requests_cap;
  jv["val_requests"] = val_requests;
  j["evaluation"] = jv;

  j["output_dir"] = output_dir;
  j["workers"] = workers;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  check_keys(j, {"profile", "env", "dataset", "bench", "predictor", "ground_truth", "trainer",
                 "baseline", "methods", "seeds", "traffic", "control", "evaluation", "output_dir",
                 "workers"},
             "top level");
  ExperimentConfig c;
  opt(j, "profile", c.profile);
  if (j.contains("env")) {
    const auto& je = j.at("env");
    check_keys(je, {"seed", "feature_dim", "n_tiers", "n_platforms", "channel_subsets",
                    "prerank_truncations", "ranking_actions", "reward_noise_frac"},
               "env");
    opt(je, "seed", c.env.seed);
    opt(je, "feature_dim", c.env.feature_dim);
    opt(je, "n_tiers", c.env.n_tiers);
    opt(je, "n_platforms", c.env.n_platforms);
    opt(je, "channel_subsets", c.env.channel_subsets);
    opt(je, "prerank_truncations", c.env.prerank_truncations);
    if (je.contains("ranking_actions")) {
      c.env.ranking_actions.clear();
      for (const auto& r : je.at("ranking_actions"))
        c.env.ranking_actions.push_back({r.at(0).get<int>(), r.at(1).get<int>()});
    }
    opt(je, "reward_noise_frac", c.env.reward_noise_frac);
  }
  if (j.contains("dataset")) {
    const auto& jd = j.at("dataset");
    check_keys(jd, {"n_requests", "policy", "epsilon", "seed", "test_fraction"}, "dataset");
    opt(jd, "n_requests", c.n_requests);
    opt(jd, "policy", c.policy);
    opt(jd, "epsilon", c.policy_epsilon);
    opt(jd, "seed", c.data_seed);
    opt(jd, "test_fraction", c.test_fraction);
  }
  if (j.contains("bench")) {
    const auto& jb = j.at("bench");
    check_keys(jb, {"queue_length_grid", "qps", "n_machines", "cores", "noise_pct", "repeats",
                    "seed"},
               "bench");
    opt(jb, "queue_length_grid", c.bench.queue_length_grid);
    opt(jb, "qps", c.bench.qps);
    opt(jb, "n_machines", c.bench.n_machines);
    opt(jb, "cores", c.bench.cores);
    opt(jb, "noise_pct", c.bench.noise_pct);
    opt(jb, "repeats", c.bench.repeats);
    opt(jb, "seed", c.bench.seed);
  }
  if (j.contains("predictor")) {
    const auto& jp = j.at("predictor");
    check_keys(jp, {"iterations", "batch_size", "lr", "seed"}, "predictor");
    opt(jp, "iterations", c.predictor.iterations);
    opt(jp, "batch_size", c.predictor.batch_size);
    opt(jp, "lr", c.predictor.lr);
    opt(jp, "seed", c.predictor.seed);
  }
  if (j.contains("ground_truth")) {
    const auto& jg = j.at("ground_truth");
    check_keys(jg, {"members", "hidden", "iterations", "batch_size", "lr", "seed"},
               "ground_truth");
    opt(jg, "members", c.gt.members);
    opt(jg, "hidden", c.gt.hidden);
    opt(jg, "iterations", c.gt.iterations);
    opt(jg, "batch_size", c.gt.batch_size);
    opt(jg, "lr", c.gt.lr);
    opt(jg, "seed", c.gt.seed);
  }
  if (j.contains("trainer")) c.trainer = rl::TrainerConfig::from_json(j.at("trainer").dump());
  if (j.contains("baseline")) c.baseline = rl::BaselineConfig::from_json(j.at("baseline").dump());
  opt(j, "methods", c.methods);
  opt(j, "seeds", c.seeds);
  if (j.contains("traffic")) {
    const auto& jt = j.at("traffic");
    check_keys(jt, {"base_count", "diurnal_amplitude", "noise_scale", "step_seconds", "start_sec",
                    "seed", "bursts"},
               "traffic");
    opt(jt, "base_count", c.traffic.base_count);
    opt(jt, "diurnal_amplitude", c.traffic.diurnal_amplitude);
    opt(jt, "noise_scale", c.traffic.noise_scale);
    opt(jt, "step_seconds", c.traffic.step_seconds);
    opt(jt, "start_sec", c.traffic.start_sec);
    opt(jt, "seed", c.traffic.seed);
    if (jt.contains("bursts")) {
      c.traffic.bursts.clear();
      for (const auto& b : jt.at("bursts"))
        c.traffic.bursts.push_back({b.at(0).get<std::size_t>(), b.at(1).get<std::size_t>(),
                                    b.at(2).get<double>()});
    }
  }
  if (j.contains("control")) {
    const auto& jc = j.at("control");
    check_keys(jc, {"horizon", "alpha", "beta", "budget", "lambda_min", "lambda_max",
                    "grid_points", "refinement_passes", "feedback_kp", "feedback_ki",
                    "static_lambda", "capacity_core_seconds", "max_requests_per_interval",
                    "oracle_forecast", "seed", "intervals", "history_intervals",
                    "sweep_intervals", "controllers", "sweep_alpha", "sweep_beta",
                    "sweep_horizon"},
               "control");
    opt(jc, "horizon", c.control.mpc.horizon);
    opt(jc, "alpha", c.control.mpc.alpha);
    opt(jc, "beta", c.control.mpc.beta);
    opt(jc, "budget", c.control.mpc.budget);
    opt(jc, "lambda_min", c.control.mpc.lambda_min);
    opt(jc, "lambda_max", c.control.mpc.lambda_max);
    opt(jc, "grid_points", c.control.mpc.grid_points);
    opt(jc, "refinement_passes", c.control.mpc.refinement_passes);
    opt(jc, "feedback_kp", c.control.feedback.k_p);
    opt(jc, "feedback_ki", c.control.feedback.k_i);
    opt(jc, "static_lambda", c.control.static_lambda);
    opt(jc, "capacity_core_seconds", c.control.capacity_core_seconds);
    opt(jc, "max_requests_per_interval", c.control.max_requests_per_interval);
    opt(jc, "oracle_forecast", c.control.oracle_forecast);
    opt(jc, "seed", c.control.seed);
    opt(jc, "intervals", c.control_intervals);
    opt(jc, "history_intervals", c.history_intervals);
    opt(jc, "sweep_intervals", c.sweep_intervals);
    opt(jc, "controllers", c.controllers);
    opt(jc, "sweep_alpha", c.sweep_alpha);
    opt(jc, "sweep_beta", c.sweep_beta);
    opt(jc, "sweep_horizon", c.sweep_horizon);
  }
  if (j.contains("evaluation")) {
    const auto& jv = j.at("evaluation");
    check_keys(jv, {"eval_requests_cap", "val_requests"}, "evaluation");
    opt(jv, "eval_requests_cap", c.eval_requests_cap);
    opt(jv, "val_requests", c.val_requests);
  }
  opt(j, "output_dir", c.output_dir);
  opt(j, "workers", c.workers);
  c.apply_profile();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  require(io::file_exists(path), "config: file not found: " + path.string());
  return from_json(io::read_file(path));
}

std::uint64_t ExperimentConfig::content_hash() const { return fnv1a64(to_json()); }

std::filesystem::path ExperimentConfig::resolved_output_dir() const {
  if (const char* e = std::getenv("MARCA_OUT"); e && *e) return std::filesystem::path(e);
  return std::filesystem::path(output_dir);
}

}  // namespace marca::exp
