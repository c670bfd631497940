#pragma once

// Feed-forward stack: relu on hidden layers, linear output, optional
// inverted dropout after each hidden activation during training.

#include <cstdint>
#include <string>
#include <vector>

#include "marca/common.hpp"
#include "marca/nn/adam.hpp"
#include "marca/nn/layers.hpp"

namespace marca::nn {

struct MlpCache {
  std::vector<DenseCache> layers;
  std::vector<std::vector<double>> masks;  // one per hidden layer when dropout active
};

class Mlp {
 public:
  Mlp() = default;
  // sizes = {in, hidden..., out}
  Mlp(const std::vector<std::size_t>& sizes, std::uint64_t seed);

  // dropout_rng non-null enables training-mode dropout at `dropout_rate`
  Tensor forward(const Tensor& x, MlpCache* cache = nullptr, Rng* dropout_rng = nullptr,
                 double dropout_rate = 0.0) const;
  Tensor backward(const Tensor& dy, const MlpCache& cache, Mlp& grads) const;

  Mlp grads_like() const;

  std::size_t in_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
  std::size_t out_dim() const { return layers_.empty() ? 0 : layers_.back().out; }

  ParamRefs param_refs(const std::string& prefix);

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i].visit(prefix + ".l" + std::to_string(i), f);
  }

  std::vector<DenseParams>& layers() { return layers_; }
  const std::vector<DenseParams>& layers() const { return layers_; }

 private:
  std::vector<DenseParams> layers_;
};

}  // namespace marca::nn
