#include "marca/alloc/allocator.hpp"

#include <algorithm>
#include <cmath>

#include "marca/io.hpp"

namespace marca::alloc {

using nn::Tensor;

int decide(std::span<const double> q_values, std::span<const double> costs, double lambda) {
  require(!q_values.empty() && q_values.size() == costs.size(), "decide: bad table sizes");
  require(lambda >= 0.0, "decide: lambda must be non-negative");
  std::size_t best = 0;
  double best_score = q_values[0] - lambda * costs[0];
  for (std::size_t a = 1; a < q_values.size(); ++a) {
    const double score = q_values[a] - lambda * costs[a];
    if (score > best_score ||
        (score == best_score &&
         (costs[a] < costs[best] || (costs[a] == costs[best] && a < best)))) {
      best = a;
      best_score = score;
    }
  }
  return static_cast<int>(best);
}

long ActionQuota::total() const {
  long t = 0;
  for (long c : counts) t += c;
  return t;
}

ActionQuota quota_from_frequencies(const env::Env& e, const env::LoggedDataset& ds,
                                   const std::vector<std::size_t>& idx) {
  ActionQuota q;
  q.counts.assign(static_cast<std::size_t>(e.actions().joint_count()), 0);
  for (std::size_t i : idx)
    q.counts[static_cast<std::size_t>(e.actions().encode(ds.episodes[i].actions))] += 1;
  return q;
}

AllocationPlan greedy_allocate(const std::vector<std::vector<double>>& predicted_q,
                               const ActionQuota& quota) {
  const std::size_t M = predicted_q.size();
  require(M > 0, "greedy_allocate: no requests");
  const std::size_t A = predicted_q[0].size();
  require(quota.counts.size() == A, "greedy_allocate: quota arity mismatch");
  require(quota.total() >= static_cast<long>(M),
          "greedy_allocate: infeasible quota (total " + std::to_string(quota.total()) +
              " < requests " + std::to_string(M) + ")");

  struct Pair {
    double q;
    std::uint32_t r, a;
  };
  std::vector<Pair> pairs;
  pairs.reserve(M * A);
  for (std::size_t r = 0; r < M; ++r) {
    require(predicted_q[r].size() == A, "greedy_allocate: ragged prediction table");
    for (std::size_t a = 0; a < A; ++a)
      pairs.push_back({predicted_q[r][a], static_cast<std::uint32_t>(r),
                       static_cast<std::uint32_t>(a)});
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    if (x.q != y.q) return x.q > y.q;
    if (x.r != y.r) return x.r < y.r;
    return x.a < y.a;
  });

  AllocationPlan plan;
  plan.assigned.assign(M, -1);
  std::vector<long> remaining = quota.counts;
  std::size_t assigned = 0;
  for (const Pair& p : pairs) {
    if (assigned == M) break;
    if (plan.assigned[p.r] >= 0 || remaining[p.a] <= 0) continue;
    plan.assigned[p.r] = static_cast<int>(p.a);
    remaining[p.a] -= 1;
    plan.predicted_total += p.q;
    ++assigned;
  }
  require(assigned == M, "greedy_allocate: could not cover every request");
  return plan;
}

double return_percent(const AllocationPlan& plan, const AllocationPlan& reference_plan,
                      const std::vector<std::vector<double>>& ground_truth_q) {
  require(plan.assigned.size() == ground_truth_q.size() &&
              reference_plan.assigned.size() == ground_truth_q.size(),
          "return_percent: plan/table size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t r = 0; r < plan.assigned.size(); ++r) {
    num += ground_truth_q[r][static_cast<std::size_t>(plan.assigned[r])];
    den += ground_truth_q[r][static_cast<std::size_t>(reference_plan.assigned[r])];
  }
  require(den != 0.0, "return_percent: reference plan has zero ground-truth revenue");
  return num / den * 100.0;
}

std::vector<int> decide_all(const std::vector<std::vector<double>>& q,
                            const std::vector<std::vector<double>>& c, double lambda) {
  require(q.size() == c.size(), "decide_all: table size mismatch");
  std::vector<int> out(q.size());
  for (std::size_t r = 0; r < q.size(); ++r) out[r] = decide(q[r], c[r], lambda);
  return out;
}

double plan_cost(const std::vector<std::vector<double>>& c, const std::vector<int>& assigned) {
  double total = 0.0;
  for (std::size_t r = 0; r < assigned.size(); ++r)
    total += c[r][static_cast<std::size_t>(assigned[r])];
  return total;
}

double binary_search_lambda(const std::vector<std::vector<double>>& q,
                            const std::vector<std::vector<double>>& c, double budget,
                            double lambda_lo, double lambda_hi) {
  require(!q.empty() && q.size() == c.size(), "binary_search_lambda: bad tables");
  require(lambda_hi > lambda_lo && lambda_lo >= 0.0, "binary_search_lambda: bad bracket");

  auto cost_at = [&](double lam) { return plan_cost(c, decide_all(q, c, lam)); };

  if (cost_at(lambda_lo) <= budget) return lambda_lo;
  if (cost_at(lambda_hi) > budget)
    fail("binary_search_lambda: budget unreachable even at minimum-cost allocation");

  // coarse log grid to bracket the crossing, then bisection
  const int grid_points = 40;
  const double glo = std::max(lambda_lo, 1e-6);
  double lo = lambda_lo, hi = lambda_hi;
  for (int i = 0; i < grid_points; ++i) {
    const double t = static_cast<double>(i) / (grid_points - 1);
    const double lam = glo * std::pow(lambda_hi / glo, t);
    if (cost_at(lam) <= budget) {
      hi = lam;
      break;
    }
    lo = lam;
  }
  while ((hi - lo) / hi > 1e-3) {
    const double mid = 0.5 * (lo + hi);
    if (cost_at(mid) <= budget)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

// ---------------------------------------------------------------------------
// ground-truth ensemble
// ---------------------------------------------------------------------------

std::vector<double> GroundTruthModel::encode(const env::Env& e, const env::RequestContext& s,
                                             const env::JointAction& a) const {
  const auto& cfg = e.config();
  std::vector<double> x;
  for (double f : s.features) x.push_back(f);
  x.push_back(cfg.n_tiers > 1 ? static_cast<double>(s.value_tier) / (cfg.n_tiers - 1) : 0.0);
  x.push_back(cfg.n_platforms > 1 ? static_cast<double>(s.platform_id) / (cfg.n_platforms - 1)
                                  : 0.0);
  const double w = 2.0 * 3.14159265358979323846 * s.timestamp_sec / 86400.0;
  x.push_back(std::sin(w));
  x.push_back(std::cos(w));
  for (int g = 0; g < env::kNumStages; ++g) {
    const int cnt = e.actions().count(g);
    for (int i = 0; i < cnt; ++i) x.push_back(i == a[static_cast<std::size_t>(g)] ? 1.0 : 0.0);
  }
  return x;
}

void GroundTruthModel::train(const env::Env& e, const env::LoggedDataset& ds,
                             const GroundTruthConfig& cfg) {
  require(!ds.episodes.empty(), "GroundTruthModel: empty dataset");
  cfg_ = cfg;
  const std::size_t in_dim = encode(e, ds.episodes[0].ctx, ds.episodes[0].actions).size();
  members_.clear();

  // trained on train + test, per the simulation protocol
  const std::size_t n = ds.episodes.size();
  std::vector<std::vector<double>> inputs(n);
  std::vector<double> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    inputs[i] = encode(e, ds.episodes[i].ctx, ds.episodes[i].actions);
    targets[i] = ds.episodes[i].reward;
  }

  for (int m = 0; m < cfg.members; ++m) {
    const std::uint64_t mseed = derive_seed(cfg.seed, "member" + std::to_string(m));
    nn::Mlp net({in_dim, cfg.hidden, cfg.hidden / 2, 1}, mseed);
    nn::Mlp grads = net.grads_like();
    nn::ParamRefs prefs = net.param_refs("gt");
    nn::ParamRefs grefs = grads.param_refs("gt");
    nn::AdamConfig acfg;
    acfg.lr = cfg.lr;
    nn::AdamOptimizer opt(acfg, prefs);
    Rng rng(derive_seed(mseed, "batches"));
    const std::size_t bsz = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
    for (int it = 0; it < cfg.iterations; ++it) {
      Tensor x = Tensor::matrix(bsz, in_dim);
      std::vector<double> y(bsz);
      for (std::size_t b = 0; b < bsz; ++b) {
        const std::size_t r = rng.uniform_index(n);
        std::copy(inputs[r].begin(), inputs[r].end(),
                  x.data.begin() + static_cast<std::ptrdiff_t>(b * in_dim));
        y[b] = targets[r];
      }
      nn::zero_grads(grefs);
      nn::MlpCache cache;
      Tensor out = net.forward(x, &cache);
      Tensor dy = Tensor::matrix(bsz, 1);
      for (std::size_t b = 0; b < bsz; ++b)
        dy.at(b, 0) = 2.0 * (out.at(b, 0) - y[b]) / static_cast<double>(bsz);
      net.backward(dy, cache, grads);
      opt.step(prefs, grefs);
    }
    members_.push_back(std::move(net));
  }
  trained_ = true;
}

double GroundTruthModel::predict(const env::Env& e, const env::RequestContext& s,
                                 const env::JointAction& a) const {
  require(trained_, "GroundTruthModel: predict before training");
  auto enc = encode(e, s, a);
  Tensor x{{1, enc.size()}, enc};
  double acc = 0.0;
  for (const auto& m : members_) acc += m.forward(x).data[0];
  return acc / static_cast<double>(members_.size());
}

std::vector<double> GroundTruthModel::predict_all(const env::Env& e,
                                                  const env::RequestContext& s) const {
  require(trained_, "GroundTruthModel: predict before training");
  const int A = e.actions().joint_count();
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(A));
  for (int flat = 0; flat < A; ++flat)
    rows[static_cast<std::size_t>(flat)] = encode(e, s, e.actions().decode(flat));
  Tensor x = Tensor::matrix(static_cast<std::size_t>(A), rows[0].size());
  for (int flat = 0; flat < A; ++flat)
    std::copy(rows[static_cast<std::size_t>(flat)].begin(),
              rows[static_cast<std::size_t>(flat)].end(),
              x.data.begin() + static_cast<std::ptrdiff_t>(flat) *
                                   static_cast<std::ptrdiff_t>(rows[0].size()));
  std::vector<double> out(static_cast<std::size_t>(A), 0.0);
  for (const auto& m : members_) {
    Tensor y = m.forward(x);
    for (int a = 0; a < A; ++a) out[static_cast<std::size_t>(a)] += y.at(static_cast<std::size_t>(a), 0);
  }
  for (double& v : out) v /= static_cast<double>(members_.size());
  return out;
}

nn::Checkpoint GroundTruthModel::to_checkpoint() const {
  nn::Checkpoint c;
  c.put_meta("kind", "ground_truth_model");
  c.put_int("members", static_cast<std::int64_t>(members_.size()));
  c.put_int("seed", static_cast<std::int64_t>(cfg_.seed));
  GroundTruthModel& self = const_cast<GroundTruthModel&>(*this);
  for (std::size_t m = 0; m < self.members_.size(); ++m)
    self.members_[m].visit("member" + std::to_string(m),
                           [&c](const std::string& name, std::vector<double>& v,
                                const std::vector<std::size_t>& shape) {
                             c.put_array(name, shape, v);
                           });
  // layer sizes for reconstruction
  std::vector<double> sizes;
  for (const auto& l : self.members_[0].layers()) {
    sizes.push_back(static_cast<double>(l.in));
    sizes.push_back(static_cast<double>(l.out));
  }
  c.put_array("arch", {sizes.size()}, sizes);
  return c;
}

GroundTruthModel GroundTruthModel::from_checkpoint(const nn::Checkpoint& c) {
  require(c.meta("kind") == "ground_truth_model", "GroundTruthModel: wrong checkpoint kind");
  GroundTruthModel m;
  const auto& arch = c.array("arch").data;
  std::vector<std::size_t> sizes;
  for (std::size_t i = 0; i < arch.size(); i += 2) sizes.push_back(static_cast<std::size_t>(arch[i]));
  sizes.push_back(static_cast<std::size_t>(arch.back()));
  const auto members = static_cast<std::size_t>(c.get_int("members"));
  for (std::size_t i = 0; i < members; ++i) {
    nn::Mlp net(sizes, 0);
    net.visit("member" + std::to_string(i),
              [&c](const std::string& name, std::vector<double>& v,
                   const std::vector<std::size_t>&) {
                const auto& arr = c.array(name);
                require(arr.data.size() == v.size(),
                        "GroundTruthModel: shape mismatch restoring " + name);
                v = arr.data;
              });
    m.members_.push_back(std::move(net));
  }
  m.trained_ = true;
  return m;
}

std::string plan_csv(const env::Env& e, const std::vector<std::size_t>& request_idx,
                     const AllocationPlan& plan, const std::vector<std::vector<double>>& pred_q,
                     const std::vector<std::vector<double>>& true_q,
                     const std::vector<std::vector<double>>& costs) {
  io::CsvWriter csv({"request", "a_retrieval", "a_prerank", "a_ranking", "predicted_q", "true_q",
                     "cost"});
  for (std::size_t r = 0; r < plan.assigned.size(); ++r) {
    const int flat = plan.assigned[r];
    const env::JointAction a = e.actions().decode(flat);
    csv.add_row({std::to_string(request_idx[r]), std::to_string(a[0]), std::to_string(a[1]),
                 std::to_string(a[2]), io::format_double(pred_q[r][static_cast<std::size_t>(flat)]),
                 io::format_double(true_q[r][static_cast<std::size_t>(flat)]),
                 io::format_double(costs[r][static_cast<std::size_t>(flat)])});
  }
  return csv.content();
}

}  // namespace marca::alloc
