#include "marca/rl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "marca/io.hpp"

namespace marca::rl {

using nn::Tensor;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// TrainerConfig
// ---------------------------------------------------------------------------

std::string TrainerConfig::to_json() const {
  ordered_json j;
  j["iterations"] = iterations;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["awrq"]["ensemble_size"] = awrq.ensemble_size;
  j["awrq"]["gru_hidden"] = awrq.gru_hidden;
  j["awrq"]["mlp_hidden"] = awrq.mlp_hidden;
  j["awrq"]["gamma"] = awrq.gamma;
  j["awrq"]["target_sync_every"] = awrq.target_sync_every;
  j["awrq"]["epsilon_greedy"] = awrq.epsilon_greedy;
  j["awrq"]["dropout"] = awrq.dropout;
  j["mixer"]["mix_hidden"] = mixer.mix_hidden;
  j["mixer"]["hypernet_hidden"] = mixer.hypernet_hidden;
  j["mixer"]["transform"] = to_string(mixer.transform);
  j["adaptive_weighting"] = adaptive_weighting;
  j["vgca"] = vgca;
  j["sarsa_targets"] = sarsa_targets;
  j["seed"] = seed;
  j["eval_every"] = eval_every;
  j["checkpoint_every"] = checkpoint_every;
  j["grad_variance_window"] = grad_variance_window;
  return j.dump();
}

TrainerConfig TrainerConfig::from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  TrainerConfig c;
  c.iterations = j.at("iterations").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr = j.at("lr").get<double>();
  c.awrq.ensemble_size = j.at("awrq").at("ensemble_size").get<int>();
  c.awrq.gru_hidden = j.at("awrq").at("gru_hidden").get<std::size_t>();
  c.awrq.mlp_hidden = j.at("awrq").at("mlp_hidden").get<std::vector<std::size_t>>();
  c.awrq.gamma = j.at("awrq").at("gamma").get<double>();
  c.awrq.target_sync_every = j.at("awrq").at("target_sync_every").get<int>();
  c.awrq.epsilon_greedy = j.at("awrq").at("epsilon_greedy").get<double>();
  c.awrq.dropout = j.at("awrq").at("dropout").get<double>();
  c.mixer.mix_hidden = j.at("mixer").at("mix_hidden").get<std::size_t>();
  c.mixer.hypernet_hidden = j.at("mixer").at("hypernet_hidden").get<std::size_t>();
  c.mixer.transform = mix_transform_from_string(j.at("mixer").at("transform").get<std::string>());
  c.adaptive_weighting = j.at("adaptive_weighting").get<bool>();
  c.vgca = j.at("vgca").get<bool>();
  c.sarsa_targets = j.at("sarsa_targets").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.eval_every = j.at("eval_every").get<int>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  c.grad_variance_window = j.at("grad_variance_window").get<int>();
  return c;
}

std::uint64_t TrainerConfig::content_hash() const { return fnv1a64(to_json()); }

// ---------------------------------------------------------------------------
// MixerModel serving
// ---------------------------------------------------------------------------

namespace {
Tensor rows_tensor(const std::vector<std::vector<double>>& rows) {
  require(!rows.empty(), "rows_tensor: no rows");
  const std::size_t d = rows[0].size();
  Tensor t = Tensor::matrix(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].begin(), rows[i].end(), t.data.begin() + static_cast<std::ptrdiff_t>(i * d));
  return t;
}
}  // namespace

std::vector<double> MixerModel::joint_q(const env::Env& e, const env::RequestContext& s) const {
  const auto& space = e.actions();
  const int A1 = space.count(0), A2 = space.count(1);
  env::JointAction probe{0, 0, 0};

  const std::vector<double> o1 = e.observation(s, probe, 0);
  Tensor O1{{1, o1.size()}, o1};
  Tensor q1 = agents[0].serve_q(std::array<Tensor, 1>{O1});

  // stage-2 branches: one row per upstream retrieval action
  std::vector<std::vector<double>> o2_rows(static_cast<std::size_t>(A1));
  for (int a1 = 0; a1 < A1; ++a1)
    o2_rows[static_cast<std::size_t>(a1)] = e.observation(s, {a1, 0, 0}, 1);
  Tensor O2 = rows_tensor(o2_rows);
  Tensor O1r2 = Tensor::matrix(static_cast<std::size_t>(A1), o1.size());
  for (int a1 = 0; a1 < A1; ++a1)
    std::copy(o1.begin(), o1.end(),
              O1r2.data.begin() + static_cast<std::ptrdiff_t>(a1) *
                                      static_cast<std::ptrdiff_t>(o1.size()));
  Tensor q2 = agents[1].serve_q(std::array<Tensor, 2>{O1r2, O2});

  // stage-3 branches: one row per (a1, a2)
  const std::size_t n3 = static_cast<std::size_t>(A1) * static_cast<std::size_t>(A2);
  std::vector<std::vector<double>> o3_rows(n3);
  Tensor O1r3 = Tensor::matrix(n3, o1.size());
  Tensor O2r3 = Tensor::matrix(n3, o1.size());
  for (int a1 = 0; a1 < A1; ++a1) {
    for (int a2 = 0; a2 < A2; ++a2) {
      const std::size_t r = static_cast<std::size_t>(a1) * static_cast<std::size_t>(A2) +
                            static_cast<std::size_t>(a2);
      o3_rows[r] = e.observation(s, {a1, a2, 0}, 2);
      std::copy(o1.begin(), o1.end(), O1r3.data.begin() + static_cast<std::ptrdiff_t>(r * o1.size()));
      const auto& o2r = o2_rows[static_cast<std::size_t>(a1)];
      std::copy(o2r.begin(), o2r.end(),
                O2r3.data.begin() + static_cast<std::ptrdiff_t>(r * o1.size()));
    }
  }
  Tensor O3 = rows_tensor(o3_rows);
  Tensor q3 = agents[2].serve_q(std::array<Tensor, 3>{O1r3, O2r3, O3});

  // mixer over every joint action, conditioned on the terminal state
  const int A = space.joint_count();
  std::vector<std::vector<double>> sterm(static_cast<std::size_t>(A));
  Tensor agent_qs = Tensor::matrix(static_cast<std::size_t>(A), env::kNumStages);
  for (int flat = 0; flat < A; ++flat) {
    const env::JointAction a = space.decode(flat);
    sterm[static_cast<std::size_t>(flat)] = e.state_vec(s, a, env::kNumStages);
    const std::size_t r12 = static_cast<std::size_t>(a[0]) * static_cast<std::size_t>(A2) +
                            static_cast<std::size_t>(a[1]);
    agent_qs.at(static_cast<std::size_t>(flat), 0) = q1.at(0, static_cast<std::size_t>(a[0]));
    agent_qs.at(static_cast<std::size_t>(flat), 1) =
        q2.at(static_cast<std::size_t>(a[0]), static_cast<std::size_t>(a[1]));
    agent_qs.at(static_cast<std::size_t>(flat), 2) = q3.at(r12, static_cast<std::size_t>(a[2]));
  }
  Tensor S = rows_tensor(sterm);
  return mix_batch(hypernet, S, agent_qs);
}

double MixerModel::q_tot_for(const env::Env& e, const env::RequestContext& s,
                             const env::JointAction& a) const {
  return joint_q(e, s)[static_cast<std::size_t>(e.actions().encode(a))];
}

nn::Checkpoint MixerModel::to_checkpoint() const {
  nn::Checkpoint c;
  c.put_meta("kind", "mixer_model");
  c.put_meta("trainer_config", cfg.to_json());
  MixerModel& self = const_cast<MixerModel&>(*this);
  auto add = [&c](const std::string& name, std::vector<double>& v,
                  const std::vector<std::size_t>& shape) { c.put_array(name, shape, v); };
  for (std::size_t g = 0; g < self.agents.size(); ++g)
    self.agents[g].visit("agent" + std::to_string(g), add);
  self.hypernet.visit("mixer", add);
  self.target_hypernet.visit("mixer_target", add);
  return c;
}

MixerModel MixerModel::from_checkpoint(const nn::Checkpoint& c, const env::Env& e) {
  MixerModel m;
  m.cfg = TrainerConfig::from_json(c.meta("trainer_config"));
  for (int g = 0; g < env::kNumStages; ++g)
    m.agents.emplace_back(g, e.obs_dim(), static_cast<std::size_t>(e.actions().count(g)),
                          m.cfg.awrq, derive_seed(m.cfg.seed, "agent" + std::to_string(g)));
  m.hypernet = Hypernet(env::kNumStages, e.state_dim(), m.cfg.mixer,
                        derive_seed(m.cfg.seed, "hypernet"));
  m.target_hypernet = m.hypernet;
  auto load = [&c](const std::string& name, std::vector<double>& v,
                   const std::vector<std::size_t>&) {
    const auto& arr = c.array(name);
    require(arr.data.size() == v.size(), "MixerModel: shape mismatch restoring " + name);
    v = arr.data;
  };
  for (std::size_t g = 0; g < m.agents.size(); ++g)
    m.agents[g].visit("agent" + std::to_string(g), load);
  m.hypernet.visit("mixer", load);
  m.target_hypernet.visit("mixer_target", load);
  return m;
}

// ---------------------------------------------------------------------------
// MixerTrainer
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kTrainLogHeader =
    "iter,agent0_loss,agent1_loss,agent2_loss,eta0_max,eta1_max,eta2_max,l_tot,grad_norm\n";
constexpr const char* kValLogHeader = "iter,env_steps,value\n";
constexpr const char* kTimingHeader = "iter,wall_ms\n";

double refs_l2_norm(const nn::ParamRefs& refs) {
  double s = 0.0;
  for (const auto& [name, vec] : refs)
    for (double v : *vec) s += v * v;
  return std::sqrt(s);
}
}  // namespace

MixerTrainer::MixerTrainer(const env::Env& e, const env::LoggedDataset& ds,
                           const TrainerConfig& cfg)
    : env_(e), ds_(ds), cfg_(cfg) {
  init_fresh();
}

MixerTrainer::MixerTrainer(const env::Env& e, const env::LoggedDataset& ds,
                           const std::filesystem::path& checkpoint_path)
    : env_(e), ds_(ds) {
  nn::Checkpoint c = nn::Checkpoint::load(checkpoint_path);
  cfg_ = TrainerConfig::from_json(c.meta("trainer_config"));
  init_fresh();
  restore(c);
}

void MixerTrainer::init_fresh() {
  model_.cfg = cfg_;
  model_.agents.clear();
  for (int g = 0; g < env::kNumStages; ++g)
    model_.agents.emplace_back(g, env_.obs_dim(),
                               static_cast<std::size_t>(env_.actions().count(g)), cfg_.awrq,
                               derive_seed(cfg_.seed, "agent" + std::to_string(g)));
  model_.hypernet = Hypernet(env::kNumStages, env_.state_dim(), cfg_.mixer,
                             derive_seed(cfg_.seed, "hypernet"));
  model_.target_hypernet = model_.hypernet;

  nn::AdamConfig acfg;
  acfg.lr = cfg_.lr;
  agent_opt_.clear();
  head_grads_.clear();
  for (int g = 0; g < env::kNumStages; ++g) {
    nn::ParamRefs refs;
    model_.agents[static_cast<std::size_t>(g)].visit_online(
        "agent" + std::to_string(g),
        [&refs](const std::string& n, std::vector<double>& v, const std::vector<std::size_t>&) {
          refs.emplace_back(n, &v);
        });
    agent_opt_.emplace_back(acfg, refs);
    for (int k = 0; k < cfg_.awrq.ensemble_size; ++k)
      head_grads_.push_back(model_.agents[static_cast<std::size_t>(g)].heads()[static_cast<std::size_t>(k)].grads_like());
  }
  hyper_grads_ = model_.hypernet.net().grads_like();
  {
    nn::ParamRefs refs = model_.hypernet.net().param_refs("mixer");
    hyper_opt_ = nn::AdamOptimizer(acfg, refs);
  }

  batch_rng_ = Rng(derive_seed(cfg_.seed, "batches"));
  dropout_rng_ = Rng(derive_seed(cfg_.seed, "dropout"));
  iter_ = 0;
  grad_norms_.clear();
  val_curve_.clear();
  train_log_ = kTrainLogHeader;
  val_log_ = kValLogHeader;
  timing_log_ = kTimingHeader;

  build_tensors();
  if (cfg_.vgca) vgca_w_ = vgca_weights(env_, ds_, train_idx_);
  else vgca_w_ = {1.0, 1.0, 1.0};
}

void MixerTrainer::build_tensors() {
  train_idx_ = ds_.train_idx;
  require(!train_idx_.empty(), "MixerTrainer: empty training split");
  const std::size_t n = train_idx_.size();
  const std::size_t od = env_.obs_dim(), sd = env_.state_dim();
  obs_.assign(env::kNumStages, Tensor());
  step_actions_.assign(env::kNumStages, std::vector<int>(n));
  for (int t = 0; t < env::kNumStages; ++t) obs_[static_cast<std::size_t>(t)] = Tensor::matrix(n, od);
  term_state_ = Tensor::matrix(n, sd);
  rewards_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ep = ds_.episodes[train_idx_[i]];
    for (int t = 0; t < env::kNumStages; ++t) {
      const auto& st = ep.steps[static_cast<std::size_t>(t)];
      std::copy(st.obs.begin(), st.obs.end(),
                obs_[static_cast<std::size_t>(t)].data.begin() + static_cast<std::ptrdiff_t>(i * od));
      step_actions_[static_cast<std::size_t>(t)][i] = st.action;
    }
    const auto& term = ep.steps[env::kNumStages - 1].next_state;
    std::copy(term.begin(), term.end(),
              term_state_.data.begin() + static_cast<std::ptrdiff_t>(i * sd));
    rewards_[i] = ep.reward;
  }
}

void MixerTrainer::run_iteration() {
  const auto t_start = std::chrono::steady_clock::now();
  const std::size_t n_train = train_idx_.size();
  const std::size_t N = std::min<std::size_t>(static_cast<std::size_t>(cfg_.batch_size), n_train);
  const std::size_t od = env_.obs_dim(), sd = env_.state_dim();
  const int K = cfg_.awrq.ensemble_size;

  // assemble the mini-batch
  std::vector<std::size_t> rows(N);
  for (std::size_t b = 0; b < N; ++b) rows[b] = batch_rng_.uniform_index(n_train);
  std::vector<Tensor> O(env::kNumStages);
  for (int t = 0; t < env::kNumStages; ++t) {
    O[static_cast<std::size_t>(t)] = Tensor::matrix(N, od);
    for (std::size_t b = 0; b < N; ++b)
      std::copy_n(obs_[static_cast<std::size_t>(t)].data.begin() +
                      static_cast<std::ptrdiff_t>(rows[b] * od),
                  od,
                  O[static_cast<std::size_t>(t)].data.begin() + static_cast<std::ptrdiff_t>(b * od));
  }
  Tensor S = Tensor::matrix(N, sd);
  std::vector<double> R(N);
  std::vector<std::vector<int>> acts(env::kNumStages, std::vector<int>(N));
  for (std::size_t b = 0; b < N; ++b) {
    std::copy_n(term_state_.data.begin() + static_cast<std::ptrdiff_t>(rows[b] * sd), sd,
                S.data.begin() + static_cast<std::ptrdiff_t>(b * sd));
    R[b] = rewards_[rows[b]];
    for (int t = 0; t < env::kNumStages; ++t)
      acts[static_cast<std::size_t>(t)][b] = step_actions_[static_cast<std::size_t>(t)][rows[b]];
  }

  Tensor agent_qs = Tensor::matrix(N, env::kNumStages);
  std::array<double, env::kNumStages> agent_mean_loss{};
  std::array<double, env::kNumStages> eta_max{};

  for (int g = 0; g < env::kNumStages; ++g) {
    auto& ens = model_.agents[static_cast<std::size_t>(g)];
    const std::size_t Ag = ens.n_actions();
    const std::span<const Tensor> prefix(O.data(), static_cast<std::size_t>(g) + 1);

    // online heads, training mode
    std::vector<QHeadCache> caches(static_cast<std::size_t>(K));
    std::vector<Tensor> q_heads(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k)
      q_heads[static_cast<std::size_t>(k)] =
          qhead_forward(ens.heads()[static_cast<std::size_t>(k)], prefix,
                        &caches[static_cast<std::size_t>(k)], &dropout_rng_, cfg_.awrq.dropout);

    // bootstrap values from the next stage's target ensemble
    std::vector<std::vector<double>> boot(static_cast<std::size_t>(K));
    const bool terminal = g == env::kNumStages - 1;
    if (!terminal) {
      const auto& next_ens = model_.agents[static_cast<std::size_t>(g) + 1];
      const std::span<const Tensor> next_prefix(O.data(), static_cast<std::size_t>(g) + 2);
      for (int k = 0; k < K; ++k) {
        Tensor qn = qhead_forward(next_ens.target_heads()[static_cast<std::size_t>(k)], next_prefix);
        auto& bv = boot[static_cast<std::size_t>(k)];
        bv.resize(N);
        for (std::size_t b = 0; b < N; ++b) {
          if (cfg_.sarsa_targets) {
            bv[b] = qn.at(b, static_cast<std::size_t>(acts[static_cast<std::size_t>(g) + 1][b]));
          } else {
            double best = qn.at(b, 0);
            for (std::size_t j = 1; j < next_ens.n_actions(); ++j)
              best = std::max(best, qn.at(b, j));
            bv[b] = best;
          }
        }
      }
    }

    // per-head losses at the logged actions, VGCA-scaled rewards
    const double wt = vgca_w_[static_cast<std::size_t>(g)];
    std::vector<double> losses(static_cast<std::size_t>(K), 0.0);
    std::vector<std::vector<double>> errs(static_cast<std::size_t>(K), std::vector<double>(N));
    for (int k = 0; k < K; ++k) {
      double acc = 0.0;
      for (std::size_t b = 0; b < N; ++b) {
        const double r_t = wt * R[b];
        const double target =
            terminal ? r_t : r_t + cfg_.awrq.gamma * boot[static_cast<std::size_t>(k)][b];
        const double q = q_heads[static_cast<std::size_t>(k)].at(
            b, static_cast<std::size_t>(acts[static_cast<std::size_t>(g)][b]));
        const double err = q - target;
        errs[static_cast<std::size_t>(k)][b] = err;
        acc += err * err;
      }
      losses[static_cast<std::size_t>(k)] = acc / static_cast<double>(N);
    }

    HeadWeights eta;
    if (cfg_.adaptive_weighting) {
      eta = adaptive_weights(losses);
    } else {
      eta.eta.assign(static_cast<std::size_t>(K), 1.0 / static_cast<double>(K));
    }

    double mean_loss = 0.0;
    for (double l : losses) mean_loss += l;
    agent_mean_loss[static_cast<std::size_t>(g)] = mean_loss / static_cast<double>(K);
    eta_max[static_cast<std::size_t>(g)] = *std::max_element(eta.eta.begin(), eta.eta.end());

    // weighted agent value for the mixer input (pre-update parameters)
    for (std::size_t b = 0; b < N; ++b) {
      double q = 0.0;
      for (int k = 0; k < K; ++k)
        q += eta.eta[static_cast<std::size_t>(k)] *
             q_heads[static_cast<std::size_t>(k)].at(
                 b, static_cast<std::size_t>(acts[static_cast<std::size_t>(g)][b]));
      agent_qs.at(b, static_cast<std::size_t>(g)) = q;
    }

    // backward: d(Σ_k η_k L_k)/dQ^k, η treated as constants
    for (int k = 0; k < K; ++k) {
      QHead& gk = head_grads_[static_cast<std::size_t>(g * K + k)];
      auto zero = [](const std::string&, std::vector<double>& v, const std::vector<std::size_t>&) {
        std::fill(v.begin(), v.end(), 0.0);
      };
      gk.visit("", zero);
      Tensor dq = Tensor::matrix(N, Ag);
      const double ek = eta.eta[static_cast<std::size_t>(k)];
      for (std::size_t b = 0; b < N; ++b)
        dq.at(b, static_cast<std::size_t>(acts[static_cast<std::size_t>(g)][b])) =
            ek * 2.0 * errs[static_cast<std::size_t>(k)][b] / static_cast<double>(N);
      qhead_backward(ens.heads()[static_cast<std::size_t>(k)], dq,
                     caches[static_cast<std::size_t>(k)], gk);
    }
    nn::ParamRefs prefs, grefs;
    ens.visit_online("agent" + std::to_string(g),
                     [&prefs](const std::string& n, std::vector<double>& v,
                              const std::vector<std::size_t>&) { prefs.emplace_back(n, &v); });
    for (int k = 0; k < K; ++k)
      head_grads_[static_cast<std::size_t>(g * K + k)].visit(
          "g" + std::to_string(k),
          [&grefs](const std::string& n, std::vector<double>& v,
                   const std::vector<std::size_t>&) { grefs.emplace_back(n, &v); });
    agent_opt_[static_cast<std::size_t>(g)].step(prefs, grefs);
  }

  // mixer/hypernet update against the raw terminal reward; agent values
  // enter as constants (Algorithm 1 updates ψ alone on L_tot)
  MixBatchCache mix_cache;
  std::vector<double> q_tot =
      mix_batch(model_.hypernet, S, agent_qs, &mix_cache, &dropout_rng_, cfg_.awrq.dropout);
  double l_tot = 0.0;
  std::vector<double> d_qtot(N);
  for (std::size_t b = 0; b < N; ++b) {
    const double err = q_tot[b] - R[b];
    l_tot += err * err;
    d_qtot[b] = 2.0 * err / static_cast<double>(N);
  }
  l_tot /= static_cast<double>(N);

  {
    auto zero = [](const std::string&, std::vector<double>& v, const std::vector<std::size_t>&) {
      std::fill(v.begin(), v.end(), 0.0);
    };
    hyper_grads_.visit("", zero);
  }
  mix_batch_backward(model_.hypernet, mix_cache, agent_qs, d_qtot, hyper_grads_);
  nn::ParamRefs hg = hyper_grads_.param_refs("g");
  const double grad_norm = refs_l2_norm(hg);
  grad_norms_.push_back(grad_norm);
  {
    nn::ParamRefs hp = model_.hypernet.net().param_refs("mixer");
    hyper_opt_.step(hp, hg);
  }

  iter_ += 1;
  if (iter_ % cfg_.awrq.target_sync_every == 0) {
    for (auto& ens : model_.agents) ens.force_sync();
    model_.target_hypernet = model_.hypernet;
  }

  // log row
  train_log_ += std::to_string(iter_);
  for (int g = 0; g < env::kNumStages; ++g)
    train_log_ += "," + io::format_double(agent_mean_loss[static_cast<std::size_t>(g)]);
  for (int g = 0; g < env::kNumStages; ++g)
    train_log_ += "," + io::format_double(eta_max[static_cast<std::size_t>(g)]);
  train_log_ += "," + io::format_double(l_tot);
  train_log_ += "," + io::format_double(grad_norm);
  train_log_ += "\n";

  const auto t_end = std::chrono::steady_clock::now();
  const double ms =
      std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(t_end - t_start)
          .count();
  timing_log_ += std::to_string(iter_) + "," + io::format_double(ms) + "\n";
}

void MixerTrainer::maybe_eval(bool force) {
  if (!eval_fn_) return;
  const bool due = iter_ == 0 || (cfg_.eval_every > 0 && iter_ % cfg_.eval_every == 0);
  if (!due && !force) return;
  const double steps = static_cast<double>(iter_) * cfg_.batch_size * env::kNumStages;
  const double v = eval_fn_(model_);
  val_curve_.push_back(ValPoint{steps, v});
  val_log_ += std::to_string(iter_) + "," + io::format_double(steps) + "," + io::format_double(v) +
              "\n";
}

TrainResult MixerTrainer::train() {
  if (iter_ == 0) maybe_eval(true);
  while (iter_ < cfg_.iterations) {
    run_iteration();
    if (cfg_.eval_every > 0 && (iter_ % cfg_.eval_every == 0 || iter_ == cfg_.iterations))
      maybe_eval(iter_ == cfg_.iterations);
    if (checkpoint_dir_ && cfg_.checkpoint_every > 0 && iter_ % cfg_.checkpoint_every == 0)
      snapshot().save(*checkpoint_dir_ / "checkpoint_latest.json");
  }
  TrainResult res;
  res.model = model_;
  res.grad_norms = grad_norms_;
  res.val_curve = val_curve_;
  res.train_log_csv = train_log_;
  res.val_log_csv = val_log_;
  res.timing_csv = timing_log_;
  res.iterations_run = iter_;
  return res;
}

nn::Checkpoint MixerTrainer::snapshot() const {
  nn::Checkpoint c = model_.to_checkpoint();
  c.put_meta("kind", "mixer_trainer");
  c.put_meta("env_hash", hash_hex(env_.config().content_hash()));
  c.put_int("iter", iter_);
  c.put_meta("rng_batch", batch_rng_.save_state());
  c.put_meta("rng_dropout", dropout_rng_.save_state());
  c.put_meta("train_log", train_log_);
  c.put_meta("val_log", val_log_);
  c.put_array("log/grad_norms", {grad_norms_.size()}, grad_norms_);
  {
    std::vector<double> flat;
    flat.reserve(val_curve_.size() * 2);
    for (const auto& p : val_curve_) {
      flat.push_back(p.env_steps);
      flat.push_back(p.value);
    }
    c.put_array("log/val_curve", {val_curve_.size(), 2}, flat);
  }
  // optimizer moments, in construction order
  std::size_t slot = 0;
  auto dump_opt = [&c, &slot](const nn::AdamOptimizer& opt) {
    for (const auto& st : opt.slots()) {
      c.put_array("adam/" + std::to_string(slot) + "/m", {st.m.size()}, st.m);
      c.put_array("adam/" + std::to_string(slot) + "/v", {st.v.size()}, st.v);
      c.put_int("adam/" + std::to_string(slot) + "/step", st.step);
      ++slot;
    }
  };
  for (const auto& opt : agent_opt_) dump_opt(opt);
  dump_opt(hyper_opt_);
  return c;
}

void MixerTrainer::restore(const nn::Checkpoint& c) {
  require(c.meta("kind") == "mixer_trainer", "MixerTrainer: not a trainer checkpoint");
  require(c.meta("env_hash") == hash_hex(env_.config().content_hash()),
          "MixerTrainer: checkpoint was trained against a different environment");
  auto load = [&c](const std::string& name, std::vector<double>& v,
                   const std::vector<std::size_t>&) {
    const auto& arr = c.array(name);
    require(arr.data.size() == v.size(), "MixerTrainer: shape mismatch restoring " + name);
    v = arr.data;
  };
  for (std::size_t g = 0; g < model_.agents.size(); ++g)
    model_.agents[g].visit("agent" + std::to_string(g), load);
  model_.hypernet.visit("mixer", load);
  model_.target_hypernet.visit("mixer_target", load);

  iter_ = c.get_int("iter");
  batch_rng_.restore_state(c.meta("rng_batch"));
  dropout_rng_.restore_state(c.meta("rng_dropout"));
  train_log_ = c.meta("train_log");
  val_log_ = c.meta("val_log");
  grad_norms_ = c.array("log/grad_norms").data;
  val_curve_.clear();
  {
    const auto& arr = c.array("log/val_curve");
    for (std::size_t i = 0; i + 1 < arr.data.size(); i += 2)
      val_curve_.push_back(ValPoint{arr.data[i], arr.data[i + 1]});
  }
  std::size_t slot = 0;
  auto load_opt = [&c, &slot](nn::AdamOptimizer& opt) {
    for (auto& st : opt.slots()) {
      const auto& m = c.array("adam/" + std::to_string(slot) + "/m");
      const auto& v = c.array("adam/" + std::to_string(slot) + "/v");
      require(m.data.size() == st.m.size() && v.data.size() == st.v.size(),
              "MixerTrainer: optimizer slot size mismatch");
      st.m = m.data;
      st.v = v.data;
      st.step = c.get_int("adam/" + std::to_string(slot) + "/step");
      ++slot;
    }
  };
  for (auto& opt : agent_opt_) load_opt(opt);
  load_opt(hyper_opt_);
}

double mixer_probe_loss(const env::Env& e, const MixerModel& m, const env::LoggedDataset& ds,
                        const std::vector<std::size_t>& idx) {
  require(!idx.empty(), "mixer_probe_loss: empty probe set");
  double acc = 0.0;
  for (std::size_t i : idx) {
    const auto& ep = ds.episodes[i];
    const double q = m.q_tot_for(e, ep.ctx, ep.actions);
    const double err = q - ep.reward;
    acc += err * err;
  }
  return acc / static_cast<double>(idx.size());
}

}  // namespace marca::rl
