#pragma once

// Row-major 64-bit tensor buffer plus the handful of matrix kernels the
// networks need. No broadcasting, no views: shapes are explicit and small.

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace marca::nn {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::initializer_list<std::size_t> s, std::vector<double> d);

  static Tensor zeros(std::initializer_list<std::size_t> s);
  static Tensor matrix(std::size_t rows, std::size_t cols);
  static Tensor vec(std::size_t n);

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  void check_finite(const char* what) const;
};

// C[n×m] = A[n×k] · B[k×m]
Tensor matmul(const Tensor& a, const Tensor& b);
// C[n×m] = Aᵀ[n×k]ᵀ... i.e. A is [k×n]: C = AᵀB
Tensor matmul_trans_a(const Tensor& a, const Tensor& b);
// C[n×m] = A[n×k] · Bᵀ where B is [m×k]
Tensor matmul_trans_b(const Tensor& a, const Tensor& b);

void add_inplace(Tensor& a, const Tensor& b);
void scale_inplace(Tensor& a, double s);

}  // namespace marca::nn
