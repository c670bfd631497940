#include "marca/rl/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "marca/io.hpp"

namespace marca::rl {

using nn::Tensor;
using ordered_json = nlohmann::ordered_json;

std::string to_string(Method m) {
  switch (m) {
    case Method::dqn: return "dqn";
    case Method::ddqn: return "ddqn";
    case Method::drqn: return "drqn";
    case Method::avg_ensemble: return "avg_ensemble";
    case Method::rem: return "rem";
    case Method::vdn: return "vdn";
    case Method::qmix: return "qmix";
    case Method::weighted_qmix: return "weighted_qmix";
  }
  fail("to_string: bad method");
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::dqn, Method::ddqn, Method::drqn, Method::avg_ensemble, Method::rem,
                   Method::vdn, Method::qmix, Method::weighted_qmix})
    if (to_string(m) == s) return m;
  fail("unknown baseline method: " + s);
}

bool is_multi_agent(Method m) {
  return m == Method::vdn || m == Method::qmix || m == Method::weighted_qmix;
}

std::string BaselineConfig::to_json() const {
  ordered_json j;
  j["method"] = rl::to_string(method);
  j["iterations"] = iterations;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["gamma"] = gamma;
  j["ensemble_size"] = ensemble_size;
  j["gru_hidden"] = gru_hidden;
  j["mlp_hidden"] = mlp_hidden;
  j["mix_hidden"] = mix_hidden;
  j["hypernet_hidden"] = hypernet_hidden;
  j["target_sync_every"] = target_sync_every;
  j["wqmix_alpha"] = wqmix_alpha;
  j["flattened_cap"] = flattened_cap;
  j["seed"] = seed;
  j["eval_every"] = eval_every;
  j["checkpoint_every"] = checkpoint_every;
  return j.dump();
}

BaselineConfig BaselineConfig::from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  BaselineConfig c;
  c.method = method_from_string(j.at("method").get<std::string>());
  c.iterations = j.at("iterations").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr = j.at("lr").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.ensemble_size = j.at("ensemble_size").get<int>();
  c.gru_hidden = j.at("gru_hidden").get<std::size_t>();
  c.mlp_hidden = j.at("mlp_hidden").get<std::vector<std::size_t>>();
  c.mix_hidden = j.at("mix_hidden").get<std::size_t>();
  c.hypernet_hidden = j.at("hypernet_hidden").get<std::size_t>();
  c.target_sync_every = j.at("target_sync_every").get<int>();
  c.wqmix_alpha = j.at("wqmix_alpha").get<double>();
  c.flattened_cap = j.at("flattened_cap").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.eval_every = j.at("eval_every").get<int>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  return c;
}

std::uint64_t BaselineConfig::content_hash() const { return fnv1a64(to_json()); }

// ---------------------------------------------------------------------------
// model construction & serving
// ---------------------------------------------------------------------------

namespace {
int sa_head_count(const BaselineConfig& cfg) {
  switch (cfg.method) {
    case Method::avg_ensemble:
    case Method::rem: return cfg.ensemble_size;
    default: return 1;
  }
}

BaselineModel make_model(const env::Env& e, const BaselineConfig& cfg) {
  BaselineModel m;
  m.cfg = cfg;
  if (is_multi_agent(cfg.method)) {
    for (int g = 0; g < env::kNumStages; ++g) {
      std::vector<std::size_t> sizes{e.obs_dim()};
      for (std::size_t s : cfg.mlp_hidden) sizes.push_back(s);
      sizes.push_back(static_cast<std::size_t>(e.actions().count(g)));
      m.ma_agents.emplace_back(sizes, derive_seed(cfg.seed, "agent" + std::to_string(g)));
    }
    m.ma_targets = m.ma_agents;
    if (cfg.method == Method::qmix || cfg.method == Method::weighted_qmix) {
      MixerConfig mc;
      mc.mix_hidden = cfg.mix_hidden;
      mc.hypernet_hidden = cfg.hypernet_hidden;
      mc.transform = MixTransform::abs_value;  // conventional QMIX non-negativity
      m.ma_hyper = Hypernet(env::kNumStages, e.state_dim(), mc, derive_seed(cfg.seed, "hypernet"));
      m.ma_hyper_target = m.ma_hyper;
    }
    return m;
  }
  const int A = e.actions().joint_count();
  require(A <= cfg.flattened_cap,
          "single-agent baseline: flattened joint action space |A|=" + std::to_string(A) +
              " exceeds cap " + std::to_string(cfg.flattened_cap));
  m.recurrent = cfg.method == Method::drqn;
  AwrqConfig hc;
  hc.gru_hidden = cfg.gru_hidden;
  hc.mlp_hidden = cfg.mlp_hidden;
  const int K = sa_head_count(cfg);
  for (int k = 0; k < K; ++k) {
    const std::uint64_t hs = derive_seed(cfg.seed, "head" + std::to_string(k));
    if (m.recurrent) {
      m.sa_rec_heads.push_back(
          QHead::make(e.state_dim(), static_cast<std::size_t>(A), hc, hs));
    } else {
      std::vector<std::size_t> sizes{e.state_dim()};
      for (std::size_t s : cfg.mlp_hidden) sizes.push_back(s);
      sizes.push_back(static_cast<std::size_t>(A));
      m.sa_ff_heads.emplace_back(sizes, hs);
    }
  }
  m.sa_rec_targets = m.sa_rec_heads;
  m.sa_ff_targets = m.sa_ff_heads;
  return m;
}

Tensor single_row(const std::vector<double>& v) { return Tensor{{1, v.size()}, v}; }
}  // namespace

std::vector<double> BaselineModel::joint_q(const env::Env& e, const env::RequestContext& s) const {
  const auto& space = e.actions();
  const int A = space.joint_count();
  if (!is_multi_agent(cfg.method)) {
    // decision-time value: Q(s_1, ·) over the flattened joint space
    const env::JointAction probe{0, 0, 0};
    const std::vector<double> s1 = e.state_vec(s, probe, 0);
    Tensor S = single_row(s1);
    std::vector<double> acc(static_cast<std::size_t>(A), 0.0);
    if (recurrent) {
      for (const auto& h : sa_rec_heads) {
        Tensor q = qhead_forward(h, std::array<Tensor, 1>{S});
        for (int a = 0; a < A; ++a) acc[static_cast<std::size_t>(a)] += q.at(0, static_cast<std::size_t>(a));
      }
      for (double& v : acc) v /= static_cast<double>(sa_rec_heads.size());
    } else {
      for (const auto& h : sa_ff_heads) {
        Tensor q = h.forward(S);
        for (int a = 0; a < A; ++a) acc[static_cast<std::size_t>(a)] += q.at(0, static_cast<std::size_t>(a));
      }
      for (double& v : acc) v /= static_cast<double>(sa_ff_heads.size());
    }
    return acc;
  }

  // multi-agent: per-agent utilities along the pipeline branches
  const int A1 = space.count(0), A2 = space.count(1);
  Tensor q1 = ma_agents[0].forward(single_row(e.observation(s, {0, 0, 0}, 0)));
  std::vector<Tensor> q2(static_cast<std::size_t>(A1));
  for (int a1 = 0; a1 < A1; ++a1)
    q2[static_cast<std::size_t>(a1)] =
        ma_agents[1].forward(single_row(e.observation(s, {a1, 0, 0}, 1)));
  std::vector<Tensor> q3(static_cast<std::size_t>(A1) * static_cast<std::size_t>(A2));
  for (int a1 = 0; a1 < A1; ++a1)
    for (int a2 = 0; a2 < A2; ++a2)
      q3[static_cast<std::size_t>(a1 * A2 + a2)] =
          ma_agents[2].forward(single_row(e.observation(s, {a1, a2, 0}, 2)));

  std::vector<double> out(static_cast<std::size_t>(A), 0.0);
  if (cfg.method == Method::vdn) {
    for (int flat = 0; flat < A; ++flat) {
      const env::JointAction a = space.decode(flat);
      out[static_cast<std::size_t>(flat)] =
          q1.at(0, static_cast<std::size_t>(a[0])) +
          q2[static_cast<std::size_t>(a[0])].at(0, static_cast<std::size_t>(a[1])) +
          q3[static_cast<std::size_t>(a[0] * A2 + a[1])].at(0, static_cast<std::size_t>(a[2]));
    }
    return out;
  }
  std::vector<std::vector<double>> sterm(static_cast<std::size_t>(A));
  Tensor agent_qs = Tensor::matrix(static_cast<std::size_t>(A), env::kNumStages);
  for (int flat = 0; flat < A; ++flat) {
    const env::JointAction a = space.decode(flat);
    sterm[static_cast<std::size_t>(flat)] = e.state_vec(s, a, env::kNumStages);
    agent_qs.at(static_cast<std::size_t>(flat), 0) = q1.at(0, static_cast<std::size_t>(a[0]));
    agent_qs.at(static_cast<std::size_t>(flat), 1) =
        q2[static_cast<std::size_t>(a[0])].at(0, static_cast<std::size_t>(a[1]));
    agent_qs.at(static_cast<std::size_t>(flat), 2) =
        q3[static_cast<std::size_t>(a[0] * A2 + a[1])].at(0, static_cast<std::size_t>(a[2]));
  }
  Tensor S = Tensor::matrix(static_cast<std::size_t>(A), e.state_dim());
  for (int flat = 0; flat < A; ++flat)
    std::copy(sterm[static_cast<std::size_t>(flat)].begin(),
              sterm[static_cast<std::size_t>(flat)].end(),
              S.data.begin() + static_cast<std::ptrdiff_t>(flat) *
                                   static_cast<std::ptrdiff_t>(e.state_dim()));
  return mix_batch(ma_hyper, S, agent_qs);
}

nn::Checkpoint BaselineModel::to_checkpoint() const {
  nn::Checkpoint c;
  c.put_meta("kind", "baseline_model");
  c.put_meta("baseline_config", cfg.to_json());
  BaselineModel& self = const_cast<BaselineModel&>(*this);
  self.visit("model", [&c](const std::string& name, std::vector<double>& v,
                           const std::vector<std::size_t>& shape) { c.put_array(name, shape, v); });
  return c;
}

BaselineModel BaselineModel::from_checkpoint(const nn::Checkpoint& c, const env::Env& e) {
  BaselineConfig cfg = BaselineConfig::from_json(c.meta("baseline_config"));
  BaselineModel m = make_model(e, cfg);
  m.visit("model", [&c](const std::string& name, std::vector<double>& v,
                        const std::vector<std::size_t>&) {
    const auto& arr = c.array(name);
    require(arr.data.size() == v.size(), "BaselineModel: shape mismatch restoring " + name);
    v = arr.data;
  });
  return m;
}

// ---------------------------------------------------------------------------
// trainer
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kTrainLogHeader = "iter,loss,grad_norm\n";
constexpr const char* kValLogHeader = "iter,env_steps,value\n";
constexpr const char* kTimingHeader = "iter,wall_ms\n";

double refs_l2(const nn::ParamRefs& refs) {
  double s = 0.0;
  for (const auto& [n, vec] : refs)
    for (double v : *vec) s += v * v;
  return std::sqrt(s);
}
}  // namespace

BaselineTrainer::BaselineTrainer(const env::Env& e, const env::LoggedDataset& ds,
                                 const BaselineConfig& cfg)
    : env_(e), ds_(ds), cfg_(cfg) {
  init_fresh();
}

BaselineTrainer::BaselineTrainer(const env::Env& e, const env::LoggedDataset& ds,
                                 const std::filesystem::path& checkpoint_path)
    : env_(e), ds_(ds) {
  nn::Checkpoint c = nn::Checkpoint::load(checkpoint_path);
  cfg_ = BaselineConfig::from_json(c.meta("baseline_config"));
  init_fresh();
  restore(c);
}

void BaselineTrainer::init_fresh() {
  model_ = make_model(env_, cfg_);

  rec_grads_.clear();
  ff_grads_.clear();
  ma_grads_.clear();
  for (const auto& h : model_.sa_rec_heads) rec_grads_.push_back(h.grads_like());
  for (const auto& h : model_.sa_ff_heads) ff_grads_.push_back(h.grads_like());
  for (const auto& a : model_.ma_agents) ma_grads_.push_back(a.grads_like());
  if (cfg_.method == Method::qmix || cfg_.method == Method::weighted_qmix)
    hyper_grads_ = model_.ma_hyper.net().grads_like();

  nn::AdamConfig acfg;
  acfg.lr = cfg_.lr;
  nn::ParamRefs refs;
  model_.visit_online("model", [&refs](const std::string& n, std::vector<double>& v,
                                       const std::vector<std::size_t>&) {
    refs.emplace_back(n, &v);
  });
  opt_ = nn::AdamOptimizer(acfg, refs);

  batch_rng_ = Rng(derive_seed(cfg_.seed, "batches"));
  mix_rng_ = Rng(derive_seed(cfg_.seed, "rem_mixtures"));
  iter_ = 0;
  grad_norms_.clear();
  val_curve_.clear();
  train_log_ = kTrainLogHeader;
  val_log_ = kValLogHeader;
  timing_log_ = kTimingHeader;
  build_tensors();
}

void BaselineTrainer::build_tensors() {
  train_idx_ = ds_.train_idx;
  require(!train_idx_.empty(), "BaselineTrainer: empty training split");
  const std::size_t n = train_idx_.size();
  const std::size_t sd = env_.state_dim(), od = env_.obs_dim();
  states_.assign(env::kNumStages + 1, Tensor());
  for (int t = 0; t <= env::kNumStages; ++t)
    states_[static_cast<std::size_t>(t)] = Tensor::matrix(n, sd);
  obs_.assign(env::kNumStages, Tensor());
  for (int g = 0; g < env::kNumStages; ++g) obs_[static_cast<std::size_t>(g)] = Tensor::matrix(n, od);
  flat_actions_.resize(n);
  step_actions_.assign(env::kNumStages, std::vector<int>(n));
  rewards_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ep = ds_.episodes[train_idx_[i]];
    for (int t = 0; t < env::kNumStages; ++t) {
      const auto& st = ep.steps[static_cast<std::size_t>(t)];
      std::copy(st.state.begin(), st.state.end(),
                states_[static_cast<std::size_t>(t)].data.begin() +
                    static_cast<std::ptrdiff_t>(i * sd));
      std::copy(st.obs.begin(), st.obs.end(),
                obs_[static_cast<std::size_t>(t)].data.begin() + static_cast<std::ptrdiff_t>(i * od));
      step_actions_[static_cast<std::size_t>(t)][i] = st.action;
    }
    const auto& term = ep.steps[env::kNumStages - 1].next_state;
    std::copy(term.begin(), term.end(),
              states_[env::kNumStages].data.begin() + static_cast<std::ptrdiff_t>(i * sd));
    flat_actions_[i] = env_.actions().encode(ep.actions);
    rewards_[i] = ep.reward;
  }
}

// ---- single-agent iteration ------------------------------------------------

void BaselineTrainer::run_iteration_single() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n_train = train_idx_.size();
  const std::size_t N = std::min<std::size_t>(static_cast<std::size_t>(cfg_.batch_size), n_train);
  const std::size_t sd = env_.state_dim();
  const int A = env_.actions().joint_count();
  const int K = sa_head_count(cfg_);

  std::vector<std::size_t> rows(N);
  for (std::size_t b = 0; b < N; ++b) rows[b] = batch_rng_.uniform_index(n_train);

  // REM: one convex mixture per mini-batch (Dirichlet with unit concentration)
  std::vector<double> alpha(static_cast<std::size_t>(K), 1.0 / static_cast<double>(K));
  if (cfg_.method == Method::rem) {
    double sum = 0.0;
    for (double& a : alpha) {
      a = -std::log(std::max(1e-300, mix_rng_.uniform()));
      sum += a;
    }
    for (double& a : alpha) a /= sum;
  }

  // stack the T per-episode transitions; step t supplies (s_t, a, r_t, s_{t+1})
  std::vector<Tensor> S(env::kNumStages + 1);
  for (int t = 0; t <= env::kNumStages; ++t) {
    S[static_cast<std::size_t>(t)] = Tensor::matrix(N, sd);
    for (std::size_t b = 0; b < N; ++b)
      std::copy_n(states_[static_cast<std::size_t>(t)].data.begin() +
                      static_cast<std::ptrdiff_t>(rows[b] * sd),
                  sd,
                  S[static_cast<std::size_t>(t)].data.begin() +
                      static_cast<std::ptrdiff_t>(b * sd));
  }

  double loss_acc = 0.0;
  const double inv = 1.0 / static_cast<double>(N * env::kNumStages);

  for (auto& g : rec_grads_) {
    auto zero = [](const std::string&, std::vector<double>& v, const std::vector<std::size_t>&) {
      std::fill(v.begin(), v.end(), 0.0);
    };
    g.visit("", zero);
  }
  for (auto& g : ff_grads_) {
    auto zero = [](const std::string&, std::vector<double>& v, const std::vector<std::size_t>&) {
      std::fill(v.begin(), v.end(), 0.0);
    };
    g.visit("", zero);
  }

  for (int t = 0; t < env::kNumStages; ++t) {
    const bool terminal = t == env::kNumStages - 1;
    const std::span<const Tensor> prefix(S.data(), static_cast<std::size_t>(t) + 1);
    const std::span<const Tensor> next_prefix(S.data(), static_cast<std::size_t>(t) + 2);

    // bootstrap values on s_{t+1}
    std::vector<double> boot(N, 0.0);
    if (!terminal) {
      if (cfg_.method == Method::ddqn) {
        // online argmax, target evaluation
        Tensor q_on = model_.recurrent
                          ? qhead_forward(model_.sa_rec_heads[0], next_prefix)
                          : model_.sa_ff_heads[0].forward(S[static_cast<std::size_t>(t) + 1]);
        Tensor q_tg = model_.recurrent
                          ? qhead_forward(model_.sa_rec_targets[0], next_prefix)
                          : model_.sa_ff_targets[0].forward(S[static_cast<std::size_t>(t) + 1]);
        for (std::size_t b = 0; b < N; ++b) {
          std::size_t best = 0;
          for (int a = 1; a < A; ++a)
            if (q_on.at(b, static_cast<std::size_t>(a)) > q_on.at(b, best))
              best = static_cast<std::size_t>(a);
          boot[b] = q_tg.at(b, best);
        }
      } else {
        // max over the (possibly mixed/averaged) target value
        Tensor mixed = Tensor::matrix(N, static_cast<std::size_t>(A));
        for (int k = 0; k < K; ++k) {
          Tensor q = model_.recurrent
                         ? qhead_forward(model_.sa_rec_targets[static_cast<std::size_t>(k)],
                                         next_prefix)
                         : model_.sa_ff_targets[static_cast<std::size_t>(k)].forward(
                               S[static_cast<std::size_t>(t) + 1]);
          const double w = cfg_.method == Method::rem ? alpha[static_cast<std::size_t>(k)]
                                                      : 1.0 / static_cast<double>(K);
          for (std::size_t i = 0; i < mixed.data.size(); ++i) mixed.data[i] += w * q.data[i];
        }
        for (std::size_t b = 0; b < N; ++b) {
          double best = mixed.at(b, 0);
          for (int a = 1; a < A; ++a) best = std::max(best, mixed.at(b, static_cast<std::size_t>(a)));
          boot[b] = best;
        }
      }
    }

    // online forward per head, mixture value, error
    std::vector<QHeadCache> rcaches(static_cast<std::size_t>(model_.recurrent ? K : 0));
    std::vector<nn::MlpCache> fcaches(static_cast<std::size_t>(model_.recurrent ? 0 : K));
    std::vector<Tensor> q_heads(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      if (model_.recurrent)
        q_heads[static_cast<std::size_t>(k)] =
            qhead_forward(model_.sa_rec_heads[static_cast<std::size_t>(k)], prefix,
                          &rcaches[static_cast<std::size_t>(k)]);
      else
        q_heads[static_cast<std::size_t>(k)] =
            model_.sa_ff_heads[static_cast<std::size_t>(k)].forward(
                S[static_cast<std::size_t>(t)], &fcaches[static_cast<std::size_t>(k)]);
    }

    std::vector<double> err(N);
    for (std::size_t b = 0; b < N; ++b) {
      const double r_t = terminal ? rewards_[rows[b]] : 0.0;
      const double target = terminal ? r_t : r_t + cfg_.gamma * boot[b];
      double q = 0.0;
      for (int k = 0; k < K; ++k) {
        const double w = cfg_.method == Method::rem ? alpha[static_cast<std::size_t>(k)]
                                                    : 1.0 / static_cast<double>(K);
        q += w * q_heads[static_cast<std::size_t>(k)].at(
                     b, static_cast<std::size_t>(flat_actions_[rows[b]]));
      }
      err[b] = q - target;
      loss_acc += err[b] * err[b];
    }

    for (int k = 0; k < K; ++k) {
      const double w = cfg_.method == Method::rem ? alpha[static_cast<std::size_t>(k)]
                                                  : 1.0 / static_cast<double>(K);
      Tensor dq = Tensor::matrix(N, static_cast<std::size_t>(A));
      for (std::size_t b = 0; b < N; ++b)
        dq.at(b, static_cast<std::size_t>(flat_actions_[rows[b]])) = 2.0 * err[b] * w * inv;
      if (model_.recurrent)
        qhead_backward(model_.sa_rec_heads[static_cast<std::size_t>(k)], dq,
                       rcaches[static_cast<std::size_t>(k)],
                       rec_grads_[static_cast<std::size_t>(k)]);
      else
        model_.sa_ff_heads[static_cast<std::size_t>(k)].backward(
            dq, fcaches[static_cast<std::size_t>(k)], ff_grads_[static_cast<std::size_t>(k)]);
    }
  }

  nn::ParamRefs prefs, grefs;
  model_.visit_online("model", [&prefs](const std::string& n, std::vector<double>& v,
                                        const std::vector<std::size_t>&) {
    prefs.emplace_back(n, &v);
  });
  for (std::size_t k = 0; k < rec_grads_.size(); ++k)
    rec_grads_[k].visit("g" + std::to_string(k),
                        [&grefs](const std::string& n, std::vector<double>& v,
                                 const std::vector<std::size_t>&) { grefs.emplace_back(n, &v); });
  for (std::size_t k = 0; k < ff_grads_.size(); ++k)
    ff_grads_[k].visit("g" + std::to_string(k),
                       [&grefs](const std::string& n, std::vector<double>& v,
                                const std::vector<std::size_t>&) { grefs.emplace_back(n, &v); });
  const double grad_norm = refs_l2(grefs);
  grad_norms_.push_back(grad_norm);
  opt_.step(prefs, grefs);

  iter_ += 1;
  if (iter_ % cfg_.target_sync_every == 0) {
    model_.sa_rec_targets = model_.sa_rec_heads;
    model_.sa_ff_targets = model_.sa_ff_heads;
  }
  const auto t1 = std::chrono::steady_clock::now();
  log_row(loss_acc * inv,
          grad_norm,
          std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(t1 - t0).count());
}

// ---- multi-agent iteration ---------------------------------------------------

void BaselineTrainer::run_iteration_multi() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n_train = train_idx_.size();
  const std::size_t N = std::min<std::size_t>(static_cast<std::size_t>(cfg_.batch_size), n_train);
  const std::size_t od = env_.obs_dim(), sd = env_.state_dim();
  const bool mixed = cfg_.method == Method::qmix || cfg_.method == Method::weighted_qmix;

  std::vector<std::size_t> rows(N);
  for (std::size_t b = 0; b < N; ++b) rows[b] = batch_rng_.uniform_index(n_train);

  std::vector<Tensor> O(env::kNumStages);
  for (int g = 0; g < env::kNumStages; ++g) {
    O[static_cast<std::size_t>(g)] = Tensor::matrix(N, od);
    for (std::size_t b = 0; b < N; ++b)
      std::copy_n(obs_[static_cast<std::size_t>(g)].data.begin() +
                      static_cast<std::ptrdiff_t>(rows[b] * od),
                  od,
                  O[static_cast<std::size_t>(g)].data.begin() + static_cast<std::ptrdiff_t>(b * od));
  }
  Tensor S = Tensor::matrix(N, sd);
  for (std::size_t b = 0; b < N; ++b)
    std::copy_n(states_[env::kNumStages].data.begin() +
                    static_cast<std::ptrdiff_t>(rows[b] * sd),
                sd, S.data.begin() + static_cast<std::ptrdiff_t>(b * sd));

  // per-agent utilities at the logged actions
  std::vector<nn::MlpCache> caches(env::kNumStages);
  std::vector<Tensor> q_all(env::kNumStages);
  Tensor agent_qs = Tensor::matrix(N, env::kNumStages);
  for (int g = 0; g < env::kNumStages; ++g) {
    q_all[static_cast<std::size_t>(g)] = model_.ma_agents[static_cast<std::size_t>(g)].forward(
        O[static_cast<std::size_t>(g)], &caches[static_cast<std::size_t>(g)]);
    for (std::size_t b = 0; b < N; ++b)
      agent_qs.at(b, static_cast<std::size_t>(g)) = q_all[static_cast<std::size_t>(g)].at(
          b, static_cast<std::size_t>(step_actions_[static_cast<std::size_t>(g)][rows[b]]));
  }

  // joint value and weighted regression on the terminal reward
  MixBatchCache mix_cache;
  std::vector<double> q_tot(N);
  if (mixed) {
    q_tot = mix_batch(model_.ma_hyper, S, agent_qs, &mix_cache);
  } else {
    for (std::size_t b = 0; b < N; ++b) {
      double s = 0.0;
      for (int g = 0; g < env::kNumStages; ++g) s += agent_qs.at(b, static_cast<std::size_t>(g));
      q_tot[b] = s;
    }
  }

  double loss = 0.0;
  std::vector<double> d_qtot(N);
  for (std::size_t b = 0; b < N; ++b) {
    const double err = q_tot[b] - rewards_[rows[b]];
    double w = 1.0;
    if (cfg_.method == Method::weighted_qmix)
      w = err < 0.0 ? 1.0 : cfg_.wqmix_alpha;  // full weight when Q_tot underestimates
    loss += w * err * err;
    d_qtot[b] = 2.0 * w * err / static_cast<double>(N);
  }
  loss /= static_cast<double>(N);

  auto zero = [](const std::string&, std::vector<double>& v, const std::vector<std::size_t>&) {
    std::fill(v.begin(), v.end(), 0.0);
  };
  for (auto& g : ma_grads_) g.visit("", zero);
  if (mixed) hyper_grads_.visit("", zero);

  Tensor d_agent = Tensor::matrix(N, env::kNumStages);
  if (mixed) {
    mix_batch_backward(model_.ma_hyper, mix_cache, agent_qs, d_qtot, hyper_grads_, &d_agent);
  } else {
    for (std::size_t b = 0; b < N; ++b)
      for (int g = 0; g < env::kNumStages; ++g)
        d_agent.at(b, static_cast<std::size_t>(g)) = d_qtot[b];
  }

  for (int g = 0; g < env::kNumStages; ++g) {
    Tensor dq = Tensor::matrix(N, static_cast<std::size_t>(env_.actions().count(g)));
    for (std::size_t b = 0; b < N; ++b)
      dq.at(b, static_cast<std::size_t>(step_actions_[static_cast<std::size_t>(g)][rows[b]])) =
          d_agent.at(b, static_cast<std::size_t>(g));
    model_.ma_agents[static_cast<std::size_t>(g)].backward(dq, caches[static_cast<std::size_t>(g)],
                                                           ma_grads_[static_cast<std::size_t>(g)]);
  }

  nn::ParamRefs prefs, grefs;
  model_.visit_online("model", [&prefs](const std::string& n, std::vector<double>& v,
                                        const std::vector<std::size_t>&) {
    prefs.emplace_back(n, &v);
  });
  for (std::size_t g = 0; g < ma_grads_.size(); ++g)
    ma_grads_[g].visit("g" + std::to_string(g),
                       [&grefs](const std::string& n, std::vector<double>& v,
                                const std::vector<std::size_t>&) { grefs.emplace_back(n, &v); });
  if (mixed)
    hyper_grads_.visit("gm", [&grefs](const std::string& n, std::vector<double>& v,
                                      const std::vector<std::size_t>&) {
      grefs.emplace_back(n, &v);
    });
  const double grad_norm = refs_l2(grefs);
  grad_norms_.push_back(grad_norm);
  opt_.step(prefs, grefs);

  iter_ += 1;
  if (iter_ % cfg_.target_sync_every == 0) {
    model_.ma_targets = model_.ma_agents;
    if (mixed) model_.ma_hyper_target = model_.ma_hyper;
  }
  const auto t1 = std::chrono::steady_clock::now();
  log_row(loss, grad_norm,
          std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(t1 - t0).count());
}

void BaselineTrainer::log_row(double loss, double grad_norm, double wall_ms) {
  train_log_ += std::to_string(iter_) + "," + io::format_double(loss) + "," +
                io::format_double(grad_norm) + "\n";
  timing_log_ += std::to_string(iter_) + "," + io::format_double(wall_ms) + "\n";
}

void BaselineTrainer::maybe_eval(bool force) {
  if (!eval_fn_) return;
  const bool due = iter_ == 0 || (cfg_.eval_every > 0 && iter_ % cfg_.eval_every == 0);
  if (!due && !force) return;
  const double steps = static_cast<double>(iter_) * cfg_.batch_size * env::kNumStages;
  const double v = eval_fn_(model_);
  val_curve_.push_back(ValPoint{steps, v});
  val_log_ += std::to_string(iter_) + "," + io::format_double(steps) + "," + io::format_double(v) +
              "\n";
}

BaselineTrainer::Result BaselineTrainer::train() {
  if (iter_ == 0) maybe_eval(true);
  while (iter_ < cfg_.iterations) {
    if (is_multi_agent(cfg_.method))
      run_iteration_multi();
    else
      run_iteration_single();
    if (cfg_.eval_every > 0 && (iter_ % cfg_.eval_every == 0 || iter_ == cfg_.iterations))
      maybe_eval(iter_ == cfg_.iterations);
    if (checkpoint_dir_ && cfg_.checkpoint_every > 0 && iter_ % cfg_.checkpoint_every == 0)
      snapshot().save(*checkpoint_dir_ / "checkpoint_latest.json");
  }
  Result res;
  res.model = model_;
  res.grad_norms = grad_norms_;
  res.val_curve = val_curve_;
  res.train_log_csv = train_log_;
  res.val_log_csv = val_log_;
  res.timing_csv = timing_log_;
  return res;
}

nn::Checkpoint BaselineTrainer::snapshot() const {
  nn::Checkpoint c = model_.to_checkpoint();
  c.put_meta("kind", "baseline_trainer");
  c.put_meta("env_hash", hash_hex(env_.config().content_hash()));
  c.put_int("iter", iter_);
  c.put_meta("rng_batch", batch_rng_.save_state());
  c.put_meta("rng_mix", mix_rng_.save_state());
  c.put_meta("train_log", train_log_);
  c.put_meta("val_log", val_log_);
  c.put_array("log/grad_norms", {grad_norms_.size()}, grad_norms_);
  std::vector<double> flat;
  for (const auto& p : val_curve_) {
    flat.push_back(p.env_steps);
    flat.push_back(p.value);
  }
  c.put_array("log/val_curve", {val_curve_.size(), 2}, flat);
  std::size_t slot = 0;
  for (const auto& st : opt_.slots()) {
    c.put_array("adam/" + std::to_string(slot) + "/m", {st.m.size()}, st.m);
    c.put_array("adam/" + std::to_string(slot) + "/v", {st.v.size()}, st.v);
    c.put_int("adam/" + std::to_string(slot) + "/step", st.step);
    ++slot;
  }
  return c;
}

void BaselineTrainer::restore(const nn::Checkpoint& c) {
  require(c.meta("kind") == "baseline_trainer", "BaselineTrainer: not a trainer checkpoint");
  require(c.meta("env_hash") == hash_hex(env_.config().content_hash()),
          "BaselineTrainer: checkpoint was trained against a different environment");
  model_.visit("model", [&c](const std::string& name, std::vector<double>& v,
                             const std::vector<std::size_t>&) {
    const auto& arr = c.array(name);
    require(arr.data.size() == v.size(), "BaselineTrainer: shape mismatch restoring " + name);
    v = arr.data;
  });
  iter_ = c.get_int("iter");
  batch_rng_.restore_state(c.meta("rng_batch"));
  mix_rng_.restore_state(c.meta("rng_mix"));
  train_log_ = c.meta("train_log");
  val_log_ = c.meta("val_log");
  grad_norms_ = c.array("log/grad_norms").data;
  val_curve_.clear();
  const auto& arr = c.array("log/val_curve");
  for (std::size_t i = 0; i + 1 < arr.data.size(); i += 2)
    val_curve_.push_back(ValPoint{arr.data[i], arr.data[i + 1]});
  std::size_t slot = 0;
  for (auto& st : opt_.slots()) {
    st.m = c.array("adam/" + std::to_string(slot) + "/m").data;
    st.v = c.array("adam/" + std::to_string(slot) + "/v").data;
    st.step = c.get_int("adam/" + std::to_string(slot) + "/step");
    ++slot;
  }
}

}  // namespace marca::rl
