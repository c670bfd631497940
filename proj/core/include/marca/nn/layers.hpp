#pragma once

// Dense layer with manual forward/backward, the overflow-safe softplus
// transform, glorot-uniform initialization, and seeded inverted dropout.

#include <cstdint>
#include <string>
#include <vector>

#include "marca/common.hpp"
#include "marca/nn/tensor.hpp"

namespace marca::nn {

enum class Activation { relu, none };

struct DenseParams {
  std::size_t in = 0, out = 0;
  std::vector<double> w;  // [in×out], w[i*out + j]
  std::vector<double> b;  // [out]

  static DenseParams zeros(std::size_t in, std::size_t out);

  // f(name, values&, shape) over every parameter array, fixed order
  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w", w, std::vector<std::size_t>{in, out});
    f(prefix + ".b", b, std::vector<std::size_t>{out});
  }
};

struct DenseCache {
  Tensor input;  // [n×in]
  Tensor pre;    // [n×out] pre-activation
};

// y = act(xW + b); cache (when non-null) records what backward needs
Tensor dense_forward(const Tensor& x, const DenseParams& p, Activation act,
                     DenseCache* cache = nullptr);

// dy → dx; accumulates into g (same shapes as p)
Tensor dense_backward(const Tensor& dy, const DenseParams& p, Activation act,
                      const DenseCache& cache, DenseParams& g);

// ln(1+eˣ), safe for |x| large; derivative is the logistic sigmoid
double softplus(double x);
double sigmoid(double x);

// weights ~ U(±sqrt(6/(fan_in+fan_out))), bias zero
DenseParams glorot_uniform_init(std::size_t fan_in, std::size_t fan_out, Rng& rng);
DenseParams glorot_uniform_init(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);

// Inverted dropout: mask entries are 0 or 1/(1-rate).
std::vector<double> dropout_mask(std::size_t n, double rate, Rng& rng);

}  // namespace marca::nn
