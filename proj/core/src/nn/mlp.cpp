#include "marca/nn/mlp.hpp"

namespace marca::nn {

Mlp::Mlp(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  require(sizes.size() >= 2, "Mlp: need at least in and out sizes");
  layers_.reserve(sizes.size() - 1);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    layers_.push_back(glorot_uniform_init(sizes[i], sizes[i + 1], rng));
  }
}

Tensor Mlp::forward(const Tensor& x, MlpCache* cache, Rng* dropout_rng,
                    double dropout_rate) const {
  Tensor h = x;
  if (cache) {
    cache->layers.assign(layers_.size(), {});
    cache->masks.clear();
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const bool last = i + 1 == layers_.size();
    const Activation act = last ? Activation::none : Activation::relu;
    h = dense_forward(h, layers_[i], act, cache ? &cache->layers[i] : nullptr);
    if (!last && dropout_rng && dropout_rate > 0.0) {
      auto mask = dropout_mask(h.data.size(), dropout_rate, *dropout_rng);
      for (std::size_t j = 0; j < h.data.size(); ++j) h.data[j] *= mask[j];
      if (cache) cache->masks.push_back(std::move(mask));
    }
  }
  return h;
}

Tensor Mlp::backward(const Tensor& dy, const MlpCache& cache, Mlp& grads) const {
  require(cache.layers.size() == layers_.size(), "Mlp::backward: cache/layer count mismatch");
  Tensor d = dy;
  for (std::size_t ri = layers_.size(); ri-- > 0;) {
    const bool last = ri + 1 == layers_.size();
    if (!last && !cache.masks.empty()) {
      const auto& mask = cache.masks[ri];
      require(mask.size() == d.data.size(), "Mlp::backward: dropout mask size mismatch");
      for (std::size_t j = 0; j < d.data.size(); ++j) d.data[j] *= mask[j];
    }
    const Activation act = last ? Activation::none : Activation::relu;
    d = dense_backward(d, layers_[ri], act, cache.layers[ri], grads.layers_[ri]);
  }
  return d;
}

Mlp Mlp::grads_like() const {
  Mlp g;
  g.layers_.reserve(layers_.size());
  for (const auto& l : layers_) g.layers_.push_back(DenseParams::zeros(l.in, l.out));
  return g;
}

ParamRefs Mlp::param_refs(const std::string& prefix) {
  ParamRefs refs;
  visit(prefix, [&refs](const std::string& name, std::vector<double>& v,
                        const std::vector<std::size_t>&) { refs.emplace_back(name, &v); });
  return refs;
}

}  // namespace marca::nn
