#include <benchmark/benchmark.h>

#include "marca/alloc/allocator.hpp"
#include "marca/cost/costbench.hpp"
#include "marca/env/env.hpp"
#include "marca/nn/gru.hpp"
#include "marca/nn/mlp.hpp"
#include "marca/rl/mixer.hpp"

using namespace marca;

static void BM_GruStep(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  nn::GruParams p = nn::GruParams::glorot(25, 32, 1);
  nn::Tensor x = nn::Tensor::matrix(batch, 25);
  nn::Tensor h = nn::Tensor::matrix(batch, 32);
  Rng rng(7);
  for (double& v : x.data) v = rng.normal();
  for (auto _ : state) {
    nn::Tensor out = nn::gru_step(x, h, p);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(BM_GruStep)->Arg(1)->Arg(32)->Arg(64);

static void BM_GruBackward(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  nn::GruParams p = nn::GruParams::glorot(25, 32, 1);
  nn::GruParams g = nn::GruParams::zeros(25, 32);
  nn::Tensor x = nn::Tensor::matrix(batch, 25);
  nn::Tensor h = nn::Tensor::matrix(batch, 32);
  Rng rng(7);
  for (double& v : x.data) v = rng.normal();
  nn::GruCache cache;
  nn::Tensor out = nn::gru_step(x, h, p, &cache);
  nn::Tensor dh = out;
  for (auto _ : state) {
    auto res = nn::gru_backward(dh, p, cache, g);
    benchmark::DoNotOptimize(res.dx.data.data());
  }
}
BENCHMARK(BM_GruBackward)->Arg(32)->Arg(64);

static void BM_MixBatch(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  rl::MixerConfig mc;
  rl::Hypernet h(3, 27, mc, 11);
  nn::Tensor s = nn::Tensor::matrix(batch, 27);
  nn::Tensor q = nn::Tensor::matrix(batch, 3);
  Rng rng(3);
  for (double& v : s.data) v = rng.normal();
  for (double& v : q.data) v = rng.normal();
  for (auto _ : state) {
    auto out = rl::mix_batch(h, s, q);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_MixBatch)->Arg(48)->Arg(256);

static void BM_JointActionEnumeration(benchmark::State& state) {
  env::Env e(env::EnvConfig::defaults());
  Rng rng(5);
  env::RequestContext s = e.sample_request(rng);
  for (auto _ : state) {
    double acc = 0.0;
    for (int flat = 0; flat < e.actions().joint_count(); ++flat)
      acc += e.latent_revenue(s, e.actions().decode(flat));
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_JointActionEnumeration);

static void BM_PavFit(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(17);
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < n; ++i)
    pts.emplace_back(static_cast<double>(i), static_cast<double>(i) * 0.1 + rng.normal());
  for (auto _ : state) {
    auto curve = cost::fit_monotone_curve(pts);
    benchmark::DoNotOptimize(curve.knot_y.data());
  }
}
BENCHMARK(BM_PavFit)->Arg(64)->Arg(1024);

static void BM_GreedyAllocate(benchmark::State& state) {
  const std::size_t M = static_cast<std::size_t>(state.range(0));
  const std::size_t A = 48;
  Rng rng(23);
  std::vector<std::vector<double>> q(M, std::vector<double>(A));
  for (auto& row : q)
    for (double& v : row) v = rng.uniform();
  alloc::ActionQuota quota;
  quota.counts.assign(A, static_cast<long>(M / A + 1));
  for (auto _ : state) {
    auto plan = alloc::greedy_allocate(q, quota);
    benchmark::DoNotOptimize(plan.assigned.data());
  }
}
BENCHMARK(BM_GreedyAllocate)->Arg(256)->Arg(2048);

BENCHMARK_MAIN();
