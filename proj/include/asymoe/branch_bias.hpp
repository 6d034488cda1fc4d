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
#include <string>
#include <vector>

#include "asymoe/model.hpp"
#include "json.hpp"

namespace asymoe {

enum class DivergenceKind { KL, TotalVariation };

std::string to_string(DivergenceKind k);
DivergenceKind divergence_kind_from_string(const std::string& s);

struct BranchContributions {
  double c_v = 0.0;  // mean ‖∂ℓ/∂V(x)‖
  double c_t = 0.0;  // mean ‖∂ℓ/∂T(y)‖ at the true class
  std::size_t samples = 0;
};

/// Per-sample cross-entropy gradients taken at the encoder outputs.
BranchContributions branch_contributions(const DualEncoder& model, const std::vector<Tensor>& prompts,
                                         std::span<const Tensor* const> images,
                                         std::span<const std::size_t> labels);

/// D(P, (1/2, 1/2)) with P = (c_v, c_t) / (c_v + c_t). KL uses the natural
/// log and 0·ln 0 = 0. Throws DegenerateInputError when both are zero.
double branch_bias(double c_v, double c_t, DivergenceKind kind = DivergenceKind::KL);

struct BranchBiasReport {
  double c_v = 0.0;
  double c_t = 0.0;
  double p_v = 0.0;
  double p_t = 0.0;
  double divergence = 0.0;
  DivergenceKind kind = DivergenceKind::KL;
  std::size_t samples_used = 0;
};

void to_json(nlohmann::json& j, const BranchBiasReport& r);

BranchBiasReport branch_bias_report(const DualEncoder& model, const std::vector<Tensor>& prompts,
                                    std::span<const Tensor* const> images,
                                    std::span<const std::size_t> labels,
                                    DivergenceKind kind = DivergenceKind::KL);

struct SuppressionReport {
  double lambda_with = 0.0;
  double lambda_without = 0.0;
  BranchBiasReport with_uaad;
  BranchBiasReport without_uaad;
  /// c_v(with) <= c_v(without)
  bool inequality_holds = false;
};

void to_json(nlohmann::json& j, const SuppressionReport& r);

/// Both configs are JSON snapshots of TrainConfig. They must agree on every
/// field except weights.lambda_bias; otherwise ConfigError.
SuppressionReport suppression_report(const DualEncoder& with_uaad, const nlohmann::json& with_config,
                                     const DualEncoder& without_uaad,
                                     const nlohmann::json& without_config,
                                     const std::vector<Tensor>& prompts,
                                     std::span<const Tensor* const> images,
                                     std::span<const std::size_t> labels,
                                     DivergenceKind kind = DivergenceKind::KL);

/// Columns: seed,lambda_bias,c_v_eff,c_t_eff,bias
std::string bias_csv_header();
std::string bias_csv_row(std::uint64_t seed, double lambda_bias, const BranchBiasReport& r);

}  // namespace asymoe
