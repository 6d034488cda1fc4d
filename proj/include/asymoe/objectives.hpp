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
#include <span>
#include <vector>

#include "asymoe/adapter.hpp"
#include "asymoe/tensor.hpp"
#include "json.hpp"

namespace asymoe {

struct LossWeights {
  double lambda_bias = 0.3;
  double lambda_bal = 0.1;

  void validate() const;
};

struct LossBreakdown {
  double ce = 0.0;
  double bias = 0.0;
  double bal = 0.0;
  double total = 0.0;
  LossWeights weights;
  std::vector<double> kappa;        // per sample
  std::vector<double> delta_norms;  // per image layer, batch mean of ‖Δv‖
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const LossBreakdown& b);

/// Log floor applied to p(label) before taking the logarithm.
inline constexpr double kLogFloor = 1e-12;

/// -(1/B)·Σ_j log max(p_j[label_j], 1e-12). `probabilities` is B × N_c.
double cross_entropy(const Tensor& probabilities, std::span<const std::size_t> labels);

/// dL_CE/dlogits for softmax probabilities: (p - onehot)/B per row, zero for
/// rows whose label probability sits below the log floor.
Tensor cross_entropy_logit_grad(const Tensor& probabilities, std::span<const std::size_t> labels);

/// Image-branch adapter outputs, indexed [sample][layer].
using DeltaBatch = std::vector<std::vector<Tensor>>;

/// (1/B)·Σ_j (1-κ_j)·Σ_i ‖Δv_{i,j}‖₂ with the norm over the flattened delta.
/// κ is a constant here: the backward pass carries no gradient through it.
double uaad_loss(std::span<const double> kappa, const DeltaBatch& deltas);
/// dL_bias/dΔv, same layout as `deltas`. The subgradient at Δv = 0 is taken as 0.
DeltaBatch uaad_backward(std::span<const double> kappa, const DeltaBatch& deltas);

/// n²·(1/(L·n))·Σ_l Σ_k (mean_j w̄_{l,j,k} - 1/n)² where w̄ is the
/// token-averaged gate of sample j and L counts the layers of every tensor.
double load_balance_loss(std::span<const GateTensor> gates);
std::vector<GateTensor> load_balance_backward(std::span<const GateTensor> gates);

/// Batch-mean gate vector per layer: result[l][k] = mean_j w̄_{l,j,k}.
std::vector<std::vector<double>> mean_gates(const GateTensor& gates);

LossBreakdown total_loss(double ce, double bias, double bal, const LossWeights& weights);

/// 2ab/(a+b), 0 when either argument is 0. Arguments are accuracies in [0, 100].
double harmonic_mean(double base_acc, double novel_acc);

}  // namespace asymoe
