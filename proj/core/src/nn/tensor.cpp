#include "marca/nn/tensor.hpp"

#include <cmath>

#include "marca/common.hpp"

namespace marca::nn {

Tensor::Tensor(std::initializer_list<std::size_t> s, std::vector<double> d)
    : shape(s), data(std::move(d)) {
  std::size_t n = 1;
  for (std::size_t dim : shape) n *= dim;
  require(n == data.size(), "Tensor: data length does not match shape");
}

Tensor Tensor::zeros(std::initializer_list<std::size_t> s) {
  Tensor t;
  t.shape.assign(s);
  std::size_t n = 1;
  for (std::size_t dim : t.shape) n *= dim;
  t.data.assign(n, 0.0);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols) { return zeros({rows, cols}); }
Tensor Tensor::vec(std::size_t n) { return zeros({n}); }

void Tensor::check_finite(const char* what) const {
  for (double v : data) {
    if (!std::isfinite(v)) fail(std::string(what) + ": non-finite value in tensor");
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  require(b.rows() == k, "matmul: inner dimension mismatch");
  Tensor c = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = &a.data[i * k];
    double* crow = &c.data[i * m];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = &b.data[p * m];
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor matmul_trans_a(const Tensor& a, const Tensor& b) {
  // a: [k×n], b: [k×m] → c = aᵀb [n×m]
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  require(b.rows() == k, "matmul_trans_a: inner dimension mismatch");
  Tensor c = Tensor::matrix(n, m);
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = &a.data[p * n];
    const double* brow = &b.data[p * m];
    for (std::size_t i = 0; i < n; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = &c.data[i * m];
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor matmul_trans_b(const Tensor& a, const Tensor& b) {
  // a: [n×k], b: [m×k] → c = abᵀ [n×m]
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  require(b.cols() == k, "matmul_trans_b: inner dimension mismatch");
  Tensor c = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = &a.data[i * k];
    double* crow = &c.data[i * m];
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = &b.data[j * k];
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
  return c;
}

void add_inplace(Tensor& a, const Tensor& b) {
  require(a.same_shape(b), "add_inplace: shape mismatch");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

void scale_inplace(Tensor& a, double s) {
  for (double& v : a.data) v *= s;
}

}  // namespace marca::nn
