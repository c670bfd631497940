#include "marca/nn/layers.hpp"

#include <cmath>

namespace marca::nn {

DenseParams DenseParams::zeros(std::size_t in, std::size_t out) {
  DenseParams p;
  p.in = in;
  p.out = out;
  p.w.assign(in * out, 0.0);
  p.b.assign(out, 0.0);
  return p;
}

Tensor dense_forward(const Tensor& x, const DenseParams& p, Activation act, DenseCache* cache) {
  require(x.cols() == p.in, "dense_forward: input dim " + std::to_string(x.cols()) +
                                " != layer in dim " + std::to_string(p.in));
  const std::size_t n = x.rows();
  Tensor wt{{p.in, p.out}, p.w};
  Tensor pre = matmul(x, wt);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p.out; ++j) pre.at(i, j) += p.b[j];

  Tensor y = pre;
  if (act == Activation::relu) {
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  }
  if (cache) {
    cache->input = x;
    cache->pre = std::move(pre);
  }
  return y;
}

Tensor dense_backward(const Tensor& dy, const DenseParams& p, Activation act,
                      const DenseCache& cache, DenseParams& g) {
  require(dy.cols() == p.out && dy.rows() == cache.input.rows(),
          "dense_backward: gradient shape mismatch");
  Tensor dpre = dy;
  if (act == Activation::relu) {
    for (std::size_t i = 0; i < dpre.data.size(); ++i)
      if (cache.pre.data[i] <= 0.0) dpre.data[i] = 0.0;
  }
  // gw += xᵀ dpre; gb += column sums of dpre
  Tensor gw = matmul_trans_a(cache.input, dpre);
  for (std::size_t i = 0; i < gw.data.size(); ++i) g.w[i] += gw.data[i];
  for (std::size_t i = 0; i < dpre.rows(); ++i)
    for (std::size_t j = 0; j < p.out; ++j) g.b[j] += dpre.at(i, j);
  // dx = dpre Wᵀ
  Tensor wt{{p.in, p.out}, p.w};
  return matmul_trans_b(dpre, wt);
}

double softplus(double x) {
  // branch at x > 30: exp(x) would overflow long before the result does
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

DenseParams glorot_uniform_init(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  require(fan_in > 0 && fan_out > 0, "glorot_uniform_init: fans must be positive");
  DenseParams p = DenseParams::zeros(fan_in, fan_out);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : p.w) v = rng.uniform(-bound, bound);
  return p;
}

DenseParams glorot_uniform_init(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  Rng rng(seed);
  return glorot_uniform_init(fan_in, fan_out, rng);
}

std::vector<double> dropout_mask(std::size_t n, double rate, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout_mask: rate must be in [0,1)");
  std::vector<double> mask(n);
  const double keep = 1.0 - rate;
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : 1.0 / keep;
  return mask;
}

}  // namespace marca::nn
