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

#include "asymoe/adapter.hpp"

#include <cmath>

#include "asymoe/errors.hpp"

namespace asymoe {
namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(Shape{rows, cols});
  for (double& v : t.values()) v = dist(rng);
  return t;
}

void require_input_width(const Tensor& z, const AdapterParams& params, const char* op) {
  if (z.rank() != 2 || z.cols() != params.hidden())
    throw DimensionError(std::string(op) + ": input " + shape_to_string(z.shape()) +
                         " does not match hidden width " + std::to_string(params.hidden()));
}

// Scales each row t of `m` by gates(t, k).
Tensor scale_rows(const Tensor& m, const Tensor& gates, std::size_t k) {
  Tensor out = m;
  for (std::size_t t = 0; t < out.rows(); ++t) {
    const double g = gates(t, k);
    for (double& v : out.row(t)) v *= g;
  }
  return out;
}

double row_dot(const Tensor& a, const Tensor& b, std::size_t t) { return dot(a.row(t), b.row(t)); }

}  // namespace

std::string to_string(Orientation o) {
  return o == Orientation::OneDownManyUps ? "one-down-many-ups" : "many-downs-one-up";
}

Orientation orientation_from_string(const std::string& s) {
  if (s == "one-down-many-ups") return Orientation::OneDownManyUps;
  if (s == "many-downs-one-up") return Orientation::ManyDownsOneUp;
  throw ConfigError("unknown orientation '" + s + "'");
}

void AdapterShape::validate() const {
  if (experts == 0) throw ConfigError("adapter: expert count must be >= 1");
  if (rank == 0) throw ConfigError("adapter: rank must be >= 1");
  if (rank >= hidden)
    throw ConfigError("adapter: rank " + std::to_string(rank) + " must be below hidden width " +
                      std::to_string(hidden));
}

void AdapterParams::validate() const {
  if (router.rank() != 2) throw DimensionError("adapter: router must be a matrix");
  if (down.empty() || up.empty()) throw ConfigError("adapter: missing projections");
  const AdapterShape s{router.rows(), down.front().cols(), router.cols()};
  s.validate();
  const std::size_t n_down = orientation == Orientation::OneDownManyUps ? 1 : s.experts;
  const std::size_t n_up = orientation == Orientation::OneDownManyUps ? s.experts : 1;
  if (down.size() != n_down || up.size() != n_up)
    throw DimensionError("adapter: " + to_string(orientation) + " expects " +
                         std::to_string(n_down) + " down and " + std::to_string(n_up) +
                         " up matrices");
  for (const auto& d : down)
    if (d.shape() != Shape{s.hidden, s.rank})
      throw DimensionError("adapter: down matrix " + shape_to_string(d.shape()));
  for (const auto& u : up)
    if (u.shape() != Shape{s.rank, s.hidden})
      throw DimensionError("adapter: up matrix " + shape_to_string(u.shape()));
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("adapter: alpha must be >= 0");
}

AdapterParams AdapterParams::zeros(const AdapterShape& shape, Orientation orientation,
                                   double alpha) {
  shape.validate();
  AdapterParams p;
  p.orientation = orientation;
  p.alpha = alpha;
  const std::size_t n_down = orientation == Orientation::OneDownManyUps ? 1 : shape.experts;
  const std::size_t n_up = orientation == Orientation::OneDownManyUps ? shape.experts : 1;
  p.down.assign(n_down, Tensor(Shape{shape.hidden, shape.rank}));
  p.up.assign(n_up, Tensor(Shape{shape.rank, shape.hidden}));
  p.router = Tensor(Shape{shape.hidden, shape.experts});
  return p;
}

AdapterParams init_adapter(const AdapterShape& shape, Orientation orientation, double alpha,
                           std::mt19937_64& rng) {
  AdapterParams p = AdapterParams::zeros(shape, orientation, alpha);
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
  for (auto& d : p.down) d = uniform_matrix(shape.hidden, shape.rank, bound, rng);
  p.router = uniform_matrix(shape.hidden, shape.experts, bound, rng);
  p.validate();
  return p;
}

Tensor router_gates(const Tensor& z, const Tensor& router) {
  if (z.rank() != 2 || router.rank() != 2 || z.cols() != router.rows())
    throw DimensionError("router_gates: input " + shape_to_string(z.shape()) + " vs router " +
                         shape_to_string(router.shape()));
  return softmax(matmul(z, router), 1);
}

AdapterOutput adapter_forward(const Tensor& z, const AdapterParams& params) {
  if (params.orientation != Orientation::OneDownManyUps)
    throw UsageError("adapter_forward: parameters are " + to_string(params.orientation));
  require_input_width(z, params, "adapter_forward");

  AdapterOutput out;
  AdapterCache& c = out.cache;
  c.input = z;
  c.gates = router_gates(z, params.router);
  c.pre.push_back(matmul(z, params.down.front()));
  c.act.push_back(relu(c.pre.front()));

  out.delta = Tensor(z.shape());
  for (std::size_t k = 0; k < params.experts(); ++k) {
    c.expert_out.push_back(matmul(c.act.front(), params.up[k]));
    out.delta += scale_rows(c.expert_out.back(), c.gates, k);
  }
  out.gates = c.gates;
  return out;
}

AdapterOutput inverted_forward(const Tensor& z, const AdapterParams& params) {
  if (params.orientation != Orientation::ManyDownsOneUp)
    throw UsageError("inverted_forward: parameters are " + to_string(params.orientation));
  require_input_width(z, params, "inverted_forward");

  AdapterOutput out;
  AdapterCache& c = out.cache;
  c.input = z;
  c.gates = router_gates(z, params.router);
  c.aggregate = Tensor(Shape{z.rows(), params.rank()});
  for (std::size_t k = 0; k < params.experts(); ++k) {
    c.pre.push_back(matmul(z, params.down[k]));
    c.act.push_back(relu(c.pre.back()));
    c.aggregate += scale_rows(c.act.back(), c.gates, k);
  }
  out.delta = matmul(c.aggregate, params.up.front());
  out.gates = c.gates;
  return out;
}

AdapterOutput forward(const Tensor& z, const AdapterParams& params) {
  return params.orientation == Orientation::OneDownManyUps ? adapter_forward(z, params)
                                                           : inverted_forward(z, params);
}

AdapterGrads adapter_backward(const Tensor& grad_delta, const Tensor& grad_gates,
                              const AdapterCache& cache, const AdapterParams& params) {
  if (cache.empty()) throw UsageError("adapter_backward: forward cache is missing");
  if (grad_delta.shape() != cache.input.shape())
    throw DimensionError("adapter_backward: upstream gradient " +
                         shape_to_string(grad_delta.shape()) + " vs input " +
                         shape_to_string(cache.input.shape()));
  if (!grad_gates.empty() && grad_gates.shape() != cache.gates.shape())
    throw DimensionError("adapter_backward: gate gradient " + shape_to_string(grad_gates.shape()));

  const std::size_t tokens = cache.input.rows();
  const std::size_t n = params.experts();
  AdapterGrads g = zeros_like(params);
  g.input = Tensor(cache.input.shape());
  Tensor d_gates = grad_gates.empty() ? Tensor(cache.gates.shape()) : grad_gates;

  if (params.orientation == Orientation::OneDownManyUps) {
    Tensor d_act(cache.act.front().shape());
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t t = 0; t < tokens; ++t)
        d_gates(t, k) += row_dot(grad_delta, cache.expert_out[k], t);
      Tensor d_expert = scale_rows(grad_delta, cache.gates, k);
      g.up[k] = matmul_tn(cache.act.front(), d_expert);
      d_act += matmul_nt(d_expert, params.up[k]);
      g.branch.push_back(std::move(d_expert));
    }
    const Tensor d_pre = relu_backward(d_act, cache.pre.front());
    g.down.front() = matmul_tn(cache.input, d_pre);
    g.input += matmul_nt(d_pre, params.down.front());
  } else {
    g.up.front() = matmul_tn(cache.aggregate, grad_delta);
    g.aggregate = matmul_nt(grad_delta, params.up.front());
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t t = 0; t < tokens; ++t)
        d_gates(t, k) += row_dot(g.aggregate, cache.act[k], t);
      // dL/dZ_k = g_k · dL/dZ_agg
      Tensor d_branch = scale_rows(g.aggregate, cache.gates, k);
      const Tensor d_pre = relu_backward(d_branch, cache.pre[k]);
      g.down[k] = matmul_tn(cache.input, d_pre);
      g.input += matmul_nt(d_pre, params.down[k]);
      g.branch.push_back(std::move(d_branch));
    }
  }

  const Tensor d_logits = softmax_rows_backward(d_gates, cache.gates);
  g.router = matmul_tn(cache.input, d_logits);
  g.input += matmul_nt(d_logits, params.router);
  return g;
}

AdapterGrads zeros_like(const AdapterParams& params) {
  AdapterGrads g;
  for (const auto& d : params.down) g.down.emplace_back(d.shape());
  for (const auto& u : params.up) g.up.emplace_back(u.shape());
  g.router = Tensor(params.router.shape());
  return g;
}

void accumulate(AdapterGrads& into, const AdapterGrads& g) {
  for (std::size_t i = 0; i < into.down.size(); ++i) into.down[i] += g.down[i];
  for (std::size_t i = 0; i < into.up.size(); ++i) into.up[i] += g.up[i];
  into.router += g.router;
}

GateTensor::GateTensor(std::size_t layers, std::size_t samples, std::size_t tokens,
                       std::size_t experts)
    : layers_(layers),
      samples_(samples),
      tokens_(tokens),
      experts_(experts),
      values_(layers * samples * tokens * experts, 0.0) {}

void GateTensor::set(std::size_t layer, std::size_t sample, const Tensor& gates) {
  if (gates.rows() != tokens_ || gates.cols() != experts_)
    throw DimensionError("GateTensor::set: gates " + shape_to_string(gates.shape()));
  for (std::size_t t = 0; t < tokens_; ++t)
    for (std::size_t k = 0; k < experts_; ++k) at(layer, sample, t, k) = gates(t, k);
}

Tensor GateTensor::slice(std::size_t layer, std::size_t sample) const {
  Tensor out(Shape{tokens_, experts_});
  for (std::size_t t = 0; t < tokens_; ++t)
    for (std::size_t k = 0; k < experts_; ++k) out(t, k) = at(layer, sample, t, k);
  return out;
}

void GateTensor::validate(double tol) const {
  for (std::size_t l = 0; l < layers_; ++l)
    for (std::size_t s = 0; s < samples_; ++s)
      for (std::size_t t = 0; t < tokens_; ++t) {
        double total = 0.0;
        for (std::size_t k = 0; k < experts_; ++k) {
          const double v = at(l, s, t, k);
          if (!(v >= 0.0)) throw NumericError("GateTensor: negative or NaN gate");
          total += v;
        }
        if (std::abs(total - 1.0) > tol)
          throw NumericError("GateTensor: gates sum to " + std::to_string(total));
      }
}

}  // namespace asymoe
