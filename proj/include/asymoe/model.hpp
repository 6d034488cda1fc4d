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

#include <cstdint>
#include <filesystem>

#include "asymoe/classifier.hpp"
#include "asymoe/encoder.hpp"
#include "asymoe/io.hpp"
#include "json.hpp"

namespace asymoe {

/// Shapes and adapter settings of the two-branch model.
struct ModelConfig {
  std::size_t layers = 2;
  std::size_t hidden = 160;
  std::size_t raw_width = 32;
  std::size_t shared_dim = 64;
  std::size_t image_tokens = 4;  // patches, CLS excluded
  std::size_t text_tokens = 5;
  std::size_t experts = 3;
  std::size_t rank = 32;
  double alpha = 0.001;
  Orientation orientation = Orientation::OneDownManyUps;
  bool image_adapters = true;
  bool text_adapters = true;
  double tau = 0.07;
  bool learn_tau = false;
  /// Seed of the frozen backbone. Both branches draw their backbone from the
  /// same stream so the untrained model already aligns matching inputs.
  std::uint64_t backbone_seed = 0;

  EncoderConfig encoder(Branch branch) const;
  AdapterShape adapter_shape() const { return {hidden, rank, experts}; }
  void validate() const;
};

struct DualEncoder {
  ModelConfig config;
  EncoderState image;
  EncoderState text;
  ClassifierHead head;  // class_embeddings are filled from the text branch on demand
};

/// Backbone from config.backbone_seed, adapters from `adapter_seed`.
DualEncoder init_model(const ModelConfig& config, std::uint64_t adapter_seed);

/// Encodes each prompt (N × raw_width) through the text branch; rows of the
/// result are the class embeddings.
Tensor encode_class_embeddings(const DualEncoder& model, const std::vector<Tensor>& prompts,
                               bool adapters_enabled = true);

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Checkpoint: every parameter of both branches plus the head, in the shared
/// container format. `extra` lands under meta["extra"].
void save_checkpoint(const DualEncoder& model, const std::filesystem::path& path,
                     io::Precision precision = io::Precision::F64,
                     const nlohmann::json& extra = nlohmann::json::object());
io::Container checkpoint_container(const DualEncoder& model);

struct LoadedCheckpoint {
  DualEncoder model;
  nlohmann::json extra;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
LoadedCheckpoint model_from_container(const io::Container& c);

}  // namespace asymoe
