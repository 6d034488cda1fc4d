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
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asymoe/tensor.hpp"
#include "json.hpp"

namespace asymoe {

enum class ShiftKind { Additive, Rotational };

/// Synthetic few-shot task: class-conditional Gaussian token clouds with a
/// base/novel class partition and a shifted copy of base-test for OOD.
struct SyntheticTaskConfig {
  std::size_t num_classes = 5;
  std::size_t tokens_per_sample = 4;
  std::size_t prompt_tokens = 5;
  std::size_t token_width = 32;
  double class_separation = 4.0;
  double noise_scale = 0.5;
  /// Additive: length of the offset added to every token.
  /// Rotational: rotation angle in radians within a fixed random plane.
  double ood_shift = 1.0;
  ShiftKind ood_kind = ShiftKind::Additive;
  double base_fraction = 0.6;
  std::size_t train_per_class = 20;
  std::size_t test_per_class = 20;
  std::uint64_t seed = 0;

  std::size_t base_class_count() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticTaskConfig& c);
void from_json(const nlohmann::json& j, SyntheticTaskConfig& c);

struct Sample {
  std::uint64_t id = 0;
  std::size_t label = 0;  // global class index
  Tensor tokens;          // tokens_per_sample × token_width
};

using Split = std::vector<Sample>;

struct Dataset {
  SyntheticTaskConfig config;
  std::vector<std::size_t> base_classes;
  std::vector<std::size_t> novel_classes;
  std::vector<Tensor> prompts;  // one prompt_tokens × token_width sequence per class
  Split base_train;
  Split base_test;
  Split novel_test;
  Split ood_test;

  friend bool operator==(const Dataset& a, const Dataset& b);
};

bool operator==(const Sample& a, const Sample& b);

/// Deterministic in `config` (including its seed).
///
/// Class c has centroid s_c of length class_separation; each image token is
/// s_c + noise_scale·N(0, I). Prompt tokens are s_c plus a small shared
/// template offset per position, followed by a shared end token. The first
/// base_class_count() classes form the base split. ood_test holds base-test
/// with the configured shift applied to every token.
Dataset generate(const SyntheticTaskConfig& config);

void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);

}  // namespace asymoe
