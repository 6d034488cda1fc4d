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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asymoe/model.hpp"
#include "asymoe/objectives.hpp"

namespace asymoe {

/// Which adapted branches feed the load-balancing loss.
enum class BalanceScope { Both, Image, Text };

std::string to_string(BalanceScope s);
BalanceScope balance_scope_from_string(const std::string& s);

struct ObjectiveOptions {
  LossWeights weights;
  BalanceScope balance_scope = BalanceScope::Both;
  bool adapters_enabled = true;
  bool compute_grads = true;
  /// Compute gradients for embedding/block/projection/CLS parameters as well.
  bool backbone_grads = false;
  /// Overrides the per-sample confidences. Finite-difference checks pin κ to
  /// the unperturbed values because the analytic pass treats κ as constant.
  std::optional<std::vector<double>> fixed_kappa;
};

struct ModelGrads {
  EncoderGrads image;
  EncoderGrads text;
  double tau = 0.0;
};

struct ObjectiveResult {
  LossBreakdown loss;
  Tensor probabilities;      // B × N_c
  Tensor class_embeddings;   // N_c × d
  std::vector<Tensor> image_outputs;
  GateTensor image_gates;    // empty when the image branch has no adapters
  GateTensor text_gates;
  std::vector<double> text_delta_norms;  // per text layer, mean over prompts
  ModelGrads grads;          // populated when compute_grads
};

/// One forward pass of the full objective over a batch, and optionally its
/// reverse pass. `prompts` lists the active classes; `labels` index into it.
ObjectiveResult evaluate_objective(const DualEncoder& model, const std::vector<Tensor>& prompts,
                                   std::span<const Tensor* const> images,
                                   std::span<const std::size_t> labels,
                                   const ObjectiveOptions& options);

}  // namespace asymoe
