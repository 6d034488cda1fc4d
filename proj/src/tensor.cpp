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

#include "asymoe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "asymoe/errors.hpp"

namespace asymoe {
namespace {

std::size_t element_count(const Shape& shape) {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_to_string(t.shape()));
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(element_count(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (element_count(shape_) != data_.size())
    throw DimensionError("Tensor: shape " + shape_to_string(shape_) + " holds " +
                         std::to_string(element_count(shape_)) + " values, got " +
                         std::to_string(data_.size()));
  require_finite("Tensor construction");
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Tensor::matrix: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw DimensionError("Tensor::dim: axis " + std::to_string(axis) + " out of range for " +
                         shape_to_string(shape_));
  return shape_[axis];
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() != 2) throw DimensionError("Tensor::rows: rank " + std::to_string(rank()));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() != 2) throw DimensionError("Tensor::cols: rank " + std::to_string(rank()));
  return shape_[1];
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

const Tensor& Tensor::require_finite(const std::string& context) const {
  if (!all_finite()) throw NumericError(context + ": non-finite value");
  return *this;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }
Tensor operator*(double s, Tensor a) { return a *= s; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows())
    throw DimensionError("matmul: " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a(i, p) * b(p, j);
      out(i, j) = acc;
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_tn");
  require_rank2(b, "matmul_tn");
  if (a.rows() != b.rows())
    throw DimensionError("matmul_tn: " + shape_to_string(a.shape()) + "^T x " +
                         shape_to_string(b.shape()));
  const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a(p, i) * b(p, j);
      out(i, j) = acc;
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  if (a.cols() != b.cols())
    throw DimensionError("matmul_nt: " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()) + "^T");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a(i, p) * b(j, p);
      out(i, j) = acc;
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  Tensor out(Shape{a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor relu(const Tensor& v) {
  Tensor out = v;
  for (double& x : out.values()) x = x > 0.0 ? x : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& pre_activation) {
  require_same_shape(grad_out, pre_activation, "relu_backward");
  Tensor out = grad_out;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!(pre_activation[i] > 0.0)) out[i] = 0.0;
  return out;
}

Tensor softmax(const Tensor& v, std::size_t axis) {
  if (v.rank() == 0 || v.rank() > 2) throw DimensionError("softmax: rank must be 1 or 2");
  if (v.rank() == 1 && axis != 0) throw DimensionError("softmax: rank-1 input requires axis 0");
  if (axis > 1) throw DimensionError("softmax: axis out of range");
  if (v.empty()) throw DegenerateInputError("softmax: empty axis");

  const bool rank1 = v.rank() == 1;
  const std::size_t rows = rank1 ? 1 : v.rows();
  const std::size_t cols = rank1 ? v.size() : v.cols();
  // Normalize along `lanes` independent slices of length `len`.
  const bool along_rows = rank1 || axis == 1;
  const std::size_t lanes = along_rows ? rows : cols;
  const std::size_t len = along_rows ? cols : rows;
  const std::size_t stride = along_rows ? 1 : cols;
  const std::size_t lane_step = along_rows ? cols : 1;

  Tensor out = v;
  auto data = out.values();
  for (std::size_t lane = 0; lane < lanes; ++lane) {
    const std::size_t base = lane * lane_step;
    double hi = data[base];
    for (std::size_t i = 1; i < len; ++i) hi = std::max(hi, data[base + i * stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      double& x = data[base + i * stride];
      x = std::exp(x - hi);
      total += x;
    }
    for (std::size_t i = 0; i < len; ++i) data[base + i * stride] /= total;
  }
  return out;
}

Tensor softmax_rows_backward(const Tensor& grad_out, const Tensor& softmax_out) {
  require_same_shape(grad_out, softmax_out, "softmax_rows_backward");
  Tensor out(softmax_out.shape());
  const std::size_t rows = softmax_out.rows(), cols = softmax_out.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double inner = dot(grad_out.row(r), softmax_out.row(r));
    for (std::size_t c = 0; c < cols; ++c)
      out(r, c) = softmax_out(r, c) * (grad_out(r, c) - inner);
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DimensionError("dot: length " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }
double l2_norm(const Tensor& t) { return l2_norm(t.values()); }

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.values()) m = std::max(m, std::abs(v));
  return m;
}

double cosine_similarity(std::span<const double> x, std::span<const double> w) {
  if (x.size() != w.size())
    throw DimensionError("cosine_similarity: length " + std::to_string(x.size()) + " vs " +
                         std::to_string(w.size()));
  const double nx = l2_norm(x), nw = l2_norm(w);
  if (nx == 0.0 || nw == 0.0) throw DegenerateInputError("cosine_similarity: zero-norm vector");
  return std::clamp(dot(x, w) / (nx * nw), -1.0, 1.0);
}

CosineGradient cosine_similarity_backward(std::span<const double> x, std::span<const double> w,
                                          double upstream) {
  const double nx = l2_norm(x), nw = l2_norm(w);
  if (nx == 0.0 || nw == 0.0)
    throw DegenerateInputError("cosine_similarity_backward: zero-norm vector");
  const double cos = dot(x, w) / (nx * nw);
  CosineGradient g{std::vector<double>(x.size()), std::vector<double>(w.size())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    g.dx[i] = upstream * (w[i] / (nx * nw) - cos * x[i] / (nx * nx));
    g.dw[i] = upstream * (x[i] / (nx * nw) - cos * w[i] / (nw * nw));
  }
  return g;
}

LayerNormResult layer_norm_rows(const Tensor& x, double eps) {
  LayerNormResult r{Tensor(x.shape()), std::vector<double>(x.rows())};
  const std::size_t cols = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    r.inv_std[i] = inv;
    auto out = r.out.row(i);
    for (std::size_t j = 0; j < cols; ++j) out[j] = (in[j] - mean) * inv;
  }
  return r;
}

Tensor layer_norm_rows_backward(const Tensor& grad_out, const LayerNormResult& fwd) {
  require_same_shape(grad_out, fwd.out, "layer_norm_rows_backward");
  Tensor dx(grad_out.shape());
  const std::size_t cols = grad_out.cols();
  const double n = static_cast<double>(cols);
  for (std::size_t i = 0; i < grad_out.rows(); ++i) {
    auto g = grad_out.row(i);
    auto y = fwd.out.row(i);
    double sum_g = 0.0, sum_gy = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      sum_g += g[j];
      sum_gy += g[j] * y[j];
    }
    auto out = dx.row(i);
    for (std::size_t j = 0; j < cols; ++j)
      out[j] = fwd.inv_std[i] * (g[j] - sum_g / n - y[j] * sum_gy / n);
  }
  return dx;
}

Tensor broadcast_row_mean(const Tensor& x) {
  Tensor sums = column_sums(x);
  const double inv = 1.0 / static_cast<double>(x.rows());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = sums[j] * inv;
  return out;
}

Tensor column_sums(const Tensor& x) {
  Tensor out(Shape{x.cols()});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] += x(i, j);
  return out;
}

}  // namespace asymoe
