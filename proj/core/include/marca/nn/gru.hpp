#pragma once

// GRU cell with manual backward. Gate convention (pinned because the
// source material leaves the variant open): z is the retention gate,
//   z = σ(Wz·x + Uz·h + bz)
//   r = σ(Wr·x + Ur·h + br)
//   ĥ = tanh(Wh·x + Uh·(r⊙h) + bh)
//   h' = z⊙h + (1−z)⊙ĥ
// so all-zero parameters give h' = 0.5·h and a large positive bz keeps h.

#include <cstdint>
#include <string>
#include <vector>

#include "marca/nn/tensor.hpp"

namespace marca::nn {

struct GruParams {
  std::size_t in = 0, hidden = 0;
  std::vector<double> wz, uz, bz;  // W: [in×H], U: [H×H], b: [H]
  std::vector<double> wr, ur, br;
  std::vector<double> wh, uh, bh;

  static GruParams zeros(std::size_t in, std::size_t hidden);
  static GruParams glorot(std::size_t in, std::size_t hidden, std::uint64_t seed);

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    const std::vector<std::size_t> wshape{in, hidden}, ushape{hidden, hidden}, bshape{hidden};
    f(prefix + ".wz", wz, wshape);
    f(prefix + ".uz", uz, ushape);
    f(prefix + ".bz", bz, bshape);
    f(prefix + ".wr", wr, wshape);
    f(prefix + ".ur", ur, ushape);
    f(prefix + ".br", br, bshape);
    f(prefix + ".wh", wh, wshape);
    f(prefix + ".uh", uh, ushape);
    f(prefix + ".bh", bh, bshape);
  }
};

struct GruCache {
  Tensor x, h_prev;       // inputs
  Tensor z, r, hcand;     // gate activations
  Tensor rh;              // r ⊙ h_prev
};

// one recurrence step over a batch: x [n×in], h_prev [n×H] → h [n×H]
Tensor gru_step(const Tensor& x, const Tensor& h_prev, const GruParams& p,
                GruCache* cache = nullptr);

struct GruBackwardResult {
  Tensor dx;
  Tensor dh_prev;
};

// dh is dLoss/dh'; gradients accumulate into g
GruBackwardResult gru_backward(const Tensor& dh, const GruParams& p, const GruCache& cache,
                               GruParams& g);

}  // namespace marca::nn
