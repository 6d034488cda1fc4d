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

#include "asymoe/objectives.hpp"

#include <cmath>

#include "asymoe/errors.hpp"
#include "asymoe/io.hpp"

namespace asymoe {
namespace {

void require_labels(const Tensor& probabilities, std::span<const std::size_t> labels) {
  if (probabilities.rank() != 2 || probabilities.rows() != labels.size())
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         shape_to_string(probabilities.shape()) + " probabilities");
  if (labels.empty()) throw DegenerateInputError("cross_entropy: empty batch");
  for (std::size_t y : labels)
    if (y >= probabilities.cols())
      throw UsageError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(probabilities.cols()) + ")");
}

std::size_t total_layers(std::span<const GateTensor> gates, std::size_t& experts) {
  std::size_t layers = 0;
  experts = 0;
  for (const auto& g : gates) {
    if (g.layers() == 0) continue;
    if (g.samples() == 0 || g.tokens() == 0)
      throw DegenerateInputError("load_balance_loss: empty batch");
    if (experts != 0 && g.experts() != experts)
      throw DimensionError("load_balance_loss: expert counts differ between gate tensors");
    experts = g.experts();
    layers += g.layers();
  }
  if (layers == 0) throw DegenerateInputError("load_balance_loss: no gates");
  return layers;
}

}  // namespace

void LossWeights::validate() const {
  if (!(lambda_bias >= 0.0) || !std::isfinite(lambda_bias))
    throw ConfigError("lambda_bias must be finite and >= 0");
  if (!(lambda_bal >= 0.0) || !std::isfinite(lambda_bal))
    throw ConfigError("lambda_bal must be finite and >= 0");
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"lambda_bias", w.lambda_bias}, {"lambda_bal", w.lambda_bal}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  io::require_known_keys(j, {"lambda_bias", "lambda_bal"}, "loss weights");
  w.lambda_bias = j.value("lambda_bias", w.lambda_bias);
  w.lambda_bal = j.value("lambda_bal", w.lambda_bal);
}

void to_json(nlohmann::json& j, const LossBreakdown& b) {
  j = {{"ce", b.ce},       {"bias", b.bias},   {"bal", b.bal},
       {"total", b.total}, {"kappa", b.kappa}, {"delta_norms", b.delta_norms},
       {"weights", b.weights}};
}

double cross_entropy(const Tensor& probabilities, std::span<const std::size_t> labels) {
  require_labels(probabilities, labels);
  double acc = 0.0;
  for (std::size_t j = 0; j < labels.size(); ++j)
    acc -= std::log(std::max(probabilities(j, labels[j]), kLogFloor));
  return acc / static_cast<double>(labels.size());
}

Tensor cross_entropy_logit_grad(const Tensor& probabilities, std::span<const std::size_t> labels) {
  require_labels(probabilities, labels);
  const double inv_b = 1.0 / static_cast<double>(labels.size());
  Tensor g(probabilities.shape());
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (probabilities(j, labels[j]) < kLogFloor) continue;
    for (std::size_t c = 0; c < probabilities.cols(); ++c)
      g(j, c) = (probabilities(j, c) - (c == labels[j] ? 1.0 : 0.0)) * inv_b;
  }
  return g;
}

double uaad_loss(std::span<const double> kappa, const DeltaBatch& deltas) {
  if (kappa.size() != deltas.size())
    throw UsageError("uaad_loss: " + std::to_string(kappa.size()) + " confidences for " +
                     std::to_string(deltas.size()) + " cached samples");
  if (deltas.empty()) throw UsageError("uaad_loss: adapter outputs were not cached");
  double acc = 0.0;
  for (std::size_t j = 0; j < deltas.size(); ++j) {
    double norms = 0.0;
    for (const Tensor& d : deltas[j]) norms += l2_norm(d);
    acc += (1.0 - kappa[j]) * norms;
  }
  return acc / static_cast<double>(deltas.size());
}

DeltaBatch uaad_backward(std::span<const double> kappa, const DeltaBatch& deltas) {
  if (kappa.size() != deltas.size() || deltas.empty())
    throw UsageError("uaad_backward: confidences do not match cached outputs");
  const double inv_b = 1.0 / static_cast<double>(deltas.size());
  DeltaBatch grads(deltas.size());
  for (std::size_t j = 0; j < deltas.size(); ++j) {
    for (const Tensor& d : deltas[j]) {
      const double norm = l2_norm(d);
      Tensor g(d.shape());
      if (norm > 0.0) g = d * ((1.0 - kappa[j]) * inv_b / norm);
      grads[j].push_back(std::move(g));
    }
  }
  return grads;
}

std::vector<std::vector<double>> mean_gates(const GateTensor& gates) {
  std::vector<std::vector<double>> out(gates.layers(), std::vector<double>(gates.experts(), 0.0));
  const double inv_t = 1.0 / static_cast<double>(gates.tokens());
  const double inv_b = 1.0 / static_cast<double>(gates.samples());
  for (std::size_t l = 0; l < gates.layers(); ++l)
    for (std::size_t s = 0; s < gates.samples(); ++s) {
      std::vector<double> sample(gates.experts(), 0.0);
      for (std::size_t t = 0; t < gates.tokens(); ++t)
        for (std::size_t k = 0; k < gates.experts(); ++k) sample[k] += gates.at(l, s, t, k);
      for (std::size_t k = 0; k < gates.experts(); ++k) out[l][k] += sample[k] * inv_t * inv_b;
    }
  return out;
}

double load_balance_loss(std::span<const GateTensor> gates) {
  std::size_t n = 0;
  const std::size_t layers = total_layers(gates, n);
  const double target = 1.0 / static_cast<double>(n);
  double acc = 0.0;
  for (const auto& g : gates) {
    if (g.layers() == 0) continue;
    for (const auto& layer : mean_gates(g))
      for (double m : layer) acc += (m - target) * (m - target);
  }
  const double nd = static_cast<double>(n);
  return nd * nd / (static_cast<double>(layers) * nd) * acc;
}

std::vector<GateTensor> load_balance_backward(std::span<const GateTensor> gates) {
  std::size_t n = 0;
  const std::size_t layers = total_layers(gates, n);
  const double nd = static_cast<double>(n);
  const double scale = nd * nd / (static_cast<double>(layers) * nd);
  std::vector<GateTensor> grads;
  for (const auto& g : gates) {
    GateTensor d(g.layers(), g.samples(), g.tokens(), g.experts());
    if (g.layers() == 0) {
      grads.push_back(std::move(d));
      continue;
    }
    const auto means = mean_gates(g);
    const double per_entry =
        1.0 / (static_cast<double>(g.samples()) * static_cast<double>(g.tokens()));
    for (std::size_t l = 0; l < g.layers(); ++l)
      for (std::size_t k = 0; k < n; ++k) {
        const double dm = scale * 2.0 * (means[l][k] - 1.0 / nd) * per_entry;
        for (std::size_t s = 0; s < g.samples(); ++s)
          for (std::size_t t = 0; t < g.tokens(); ++t) d.at(l, s, t, k) = dm;
      }
    grads.push_back(std::move(d));
  }
  return grads;
}

LossBreakdown total_loss(double ce, double bias, double bal, const LossWeights& weights) {
  weights.validate();
  LossBreakdown b;
  b.ce = ce;
  b.bias = bias;
  b.bal = bal;
  b.weights = weights;
  b.total = ce + weights.lambda_bias * bias + weights.lambda_bal * bal;
  return b;
}

double harmonic_mean(double base_acc, double novel_acc) {
  if (base_acc == 0.0 || novel_acc == 0.0) return 0.0;
  return 2.0 * base_acc * novel_acc / (base_acc + novel_acc);
}

}  // namespace asymoe
