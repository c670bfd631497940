#include "marca/nn/gru.hpp"

#include <cmath>

#include "marca/common.hpp"
#include "marca/nn/layers.hpp"

namespace marca::nn {

GruParams GruParams::zeros(std::size_t in, std::size_t hidden) {
  GruParams p;
  p.in = in;
  p.hidden = hidden;
  p.wz.assign(in * hidden, 0.0);
  p.uz.assign(hidden * hidden, 0.0);
  p.bz.assign(hidden, 0.0);
  p.wr = p.wz;
  p.ur = p.uz;
  p.br = p.bz;
  p.wh = p.wz;
  p.uh = p.uz;
  p.bh = p.bz;
  return p;
}

GruParams GruParams::glorot(std::size_t in, std::size_t hidden, std::uint64_t seed) {
  GruParams p = zeros(in, hidden);
  Rng rng(seed);
  const double wb = std::sqrt(6.0 / static_cast<double>(in + hidden));
  const double ub = std::sqrt(6.0 / static_cast<double>(hidden + hidden));
  for (double* mat : {&p.wz[0], &p.wr[0], &p.wh[0]})
    for (std::size_t i = 0; i < in * hidden; ++i) mat[i] = rng.uniform(-wb, wb);
  for (double* mat : {&p.uz[0], &p.ur[0], &p.uh[0]})
    for (std::size_t i = 0; i < hidden * hidden; ++i) mat[i] = rng.uniform(-ub, ub);
  return p;
}

namespace {
// y [n×H] += x [n×I] · W [I×H] (+ optional bias)
void affine_accum(const Tensor& x, const std::vector<double>& w, std::size_t in,
                  std::size_t hidden, const std::vector<double>* bias, Tensor& y) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* xrow = &x.data[i * in];
    double* yrow = &y.data[i * hidden];
    if (bias)
      for (std::size_t j = 0; j < hidden; ++j) yrow[j] += (*bias)[j];
    for (std::size_t p = 0; p < in; ++p) {
      const double xv = xrow[p];
      if (xv == 0.0) continue;
      const double* wrow = &w[p * hidden];
      for (std::size_t j = 0; j < hidden; ++j) yrow[j] += xv * wrow[j];
    }
  }
}
}  // namespace

Tensor gru_step(const Tensor& x, const Tensor& h_prev, const GruParams& p, GruCache* cache) {
  require(x.cols() == p.in, "gru_step: observation dim " + std::to_string(x.cols()) +
                                " != cell in dim " + std::to_string(p.in));
  require(h_prev.cols() == p.hidden && h_prev.rows() == x.rows(),
          "gru_step: hidden state shape mismatch");
  const std::size_t n = x.rows(), H = p.hidden;

  Tensor az = Tensor::matrix(n, H), ar = Tensor::matrix(n, H);
  affine_accum(x, p.wz, p.in, H, &p.bz, az);
  affine_accum(h_prev, p.uz, H, H, nullptr, az);
  affine_accum(x, p.wr, p.in, H, &p.br, ar);
  affine_accum(h_prev, p.ur, H, H, nullptr, ar);

  Tensor z = az, r = ar;
  for (double& v : z.data) v = sigmoid(v);
  for (double& v : r.data) v = sigmoid(v);

  Tensor rh = r;
  for (std::size_t i = 0; i < rh.data.size(); ++i) rh.data[i] *= h_prev.data[i];

  Tensor ah = Tensor::matrix(n, H);
  affine_accum(x, p.wh, p.in, H, &p.bh, ah);
  affine_accum(rh, p.uh, H, H, nullptr, ah);
  Tensor hcand = ah;
  for (double& v : hcand.data) v = std::tanh(v);

  Tensor h = Tensor::matrix(n, H);
  for (std::size_t i = 0; i < h.data.size(); ++i)
    h.data[i] = z.data[i] * h_prev.data[i] + (1.0 - z.data[i]) * hcand.data[i];

  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->hcand = std::move(hcand);
    cache->rh = std::move(rh);
  }
  return h;
}

GruBackwardResult gru_backward(const Tensor& dh, const GruParams& p, const GruCache& cache,
                               GruParams& g) {
  const std::size_t n = dh.rows(), H = p.hidden;
  require(dh.cols() == H && n == cache.x.rows(), "gru_backward: gradient shape mismatch");

  Tensor dz = Tensor::matrix(n, H), dhc = Tensor::matrix(n, H), dh_prev = Tensor::matrix(n, H);
  for (std::size_t i = 0; i < dh.data.size(); ++i) {
    const double d = dh.data[i];
    dz.data[i] = d * (cache.h_prev.data[i] - cache.hcand.data[i]);
    dhc.data[i] = d * (1.0 - cache.z.data[i]);
    dh_prev.data[i] = d * cache.z.data[i];
  }

  // candidate path: ĥ = tanh(ah)
  Tensor dah = dhc;
  for (std::size_t i = 0; i < dah.data.size(); ++i)
    dah.data[i] *= 1.0 - cache.hcand.data[i] * cache.hcand.data[i];

  Tensor wh{{p.in, H}, p.wh}, uh{{H, H}, p.uh};
  Tensor dx = matmul_trans_b(dah, wh);
  Tensor drh = matmul_trans_b(dah, uh);
  {
    Tensor gw = matmul_trans_a(cache.x, dah);
    for (std::size_t i = 0; i < gw.data.size(); ++i) g.wh[i] += gw.data[i];
    Tensor gu = matmul_trans_a(cache.rh, dah);
    for (std::size_t i = 0; i < gu.data.size(); ++i) g.uh[i] += gu.data[i];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < H; ++j) g.bh[j] += dah.at(i, j);
  }

  Tensor dr = Tensor::matrix(n, H);
  for (std::size_t i = 0; i < drh.data.size(); ++i) {
    dr.data[i] = drh.data[i] * cache.h_prev.data[i];
    dh_prev.data[i] += drh.data[i] * cache.r.data[i];
  }

  // gate pre-activations
  Tensor daz = dz, dar = dr;
  for (std::size_t i = 0; i < daz.data.size(); ++i)
    daz.data[i] *= cache.z.data[i] * (1.0 - cache.z.data[i]);
  for (std::size_t i = 0; i < dar.data.size(); ++i)
    dar.data[i] *= cache.r.data[i] * (1.0 - cache.r.data[i]);

  Tensor wz{{p.in, H}, p.wz}, uz{{H, H}, p.uz};
  Tensor wr{{p.in, H}, p.wr}, ur{{H, H}, p.ur};
  add_inplace(dx, matmul_trans_b(daz, wz));
  add_inplace(dx, matmul_trans_b(dar, wr));
  add_inplace(dh_prev, matmul_trans_b(daz, uz));
  add_inplace(dh_prev, matmul_trans_b(dar, ur));

  {
    Tensor gw = matmul_trans_a(cache.x, daz);
    for (std::size_t i = 0; i < gw.data.size(); ++i) g.wz[i] += gw.data[i];
    Tensor gu = matmul_trans_a(cache.h_prev, daz);
    for (std::size_t i = 0; i < gu.data.size(); ++i) g.uz[i] += gu.data[i];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < H; ++j) g.bz[j] += daz.at(i, j);
  }
  {
    Tensor gw = matmul_trans_a(cache.x, dar);
    for (std::size_t i = 0; i < gw.data.size(); ++i) g.wr[i] += gw.data[i];
    Tensor gu = matmul_trans_a(cache.h_prev, dar);
    for (std::size_t i = 0; i < gu.data.size(); ++i) g.ur[i] += gu.data[i];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < H; ++j) g.br[j] += dar.at(i, j);
  }

  return {std::move(dx), std::move(dh_prev)};
}

}  // namespace marca::nn
