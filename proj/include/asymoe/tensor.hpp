// Copyright 2026 The asymoe Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace asymoe {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Every constructor that accepts values rejects NaN and Inf, so a Tensor
/// built from external data is always finite. Arithmetic helpers below do not
/// re-check; callers that need the guarantee after a computation use
/// require_finite().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(Shape{rows, cols}); }
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);
  static Tensor full(Shape shape, double value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t dim(std::size_t axis) const;

  // Rank-2 accessors. A rank-1 tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  bool all_finite() const noexcept;
  /// Throws NumericError naming `context` if any value is non-finite.
  const Tensor& require_finite(const std::string& context) const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);
  void fill(double value);

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
Tensor operator*(double s, Tensor a);

/// Standard matrix product. Summation runs over the inner index in ascending order.
Tensor matmul(const Tensor& a, const Tensor& b);
/// aᵀ·b without materializing the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// a·bᵀ without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor hadamard(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& v);
/// Gradient of relu given the upstream gradient and the pre-activation.
Tensor relu_backward(const Tensor& grad_out, const Tensor& pre_activation);

/// Max-subtracted softmax. For rank-2 input, axis 1 normalizes each row and
/// axis 0 each column; rank-1 input accepts axis 0 only.
Tensor softmax(const Tensor& v, std::size_t axis = 1);
/// Row-wise softmax Jacobian-vector product: given y = softmax(x) along rows
/// and dL/dy, returns dL/dx.
Tensor softmax_rows_backward(const Tensor& grad_out, const Tensor& softmax_out);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);
double l2_norm(const Tensor& t);
double max_abs(const Tensor& t);

/// x·w / (|x||w|). Throws DegenerateInputError on a zero vector.
double cosine_similarity(std::span<const double> x, std::span<const double> w);

struct CosineGradient {
  std::vector<double> dx;
  std::vector<double> dw;
};
/// Gradient of cosine_similarity(x, w) scaled by `upstream`.
CosineGradient cosine_similarity_backward(std::span<const double> x, std::span<const double> w,
                                          double upstream);

/// Per-row layer normalization without affine parameters.
struct LayerNormResult {
  Tensor out;
  std::vector<double> inv_std;
};
LayerNormResult layer_norm_rows(const Tensor& x, double eps = 1e-5);
Tensor layer_norm_rows_backward(const Tensor& grad_out, const LayerNormResult& fwd);

/// Column means broadcast back to every row: out(r, c) = mean_r' x(r', c).
Tensor broadcast_row_mean(const Tensor& x);
Tensor column_sums(const Tensor& x);

}  // namespace asymoe
