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
#include <random>
#include <string>
#include <vector>

#include "asymoe/adapter.hpp"
#include "asymoe/tensor.hpp"

namespace asymoe {

enum class Branch { Image, Text };

std::string to_string(Branch b);

struct EncoderConfig {
  Branch branch = Branch::Image;
  std::size_t layers = 2;
  std::size_t hidden = 160;
  /// Raw token count: M patches for the image branch, N tokens for text.
  std::size_t tokens = 4;
  std::size_t raw_width = 32;
  std::size_t shared_dim = 64;

  /// Rows of the layer representations; the image branch adds a CLS row at 0.
  std::size_t sequence_length() const { return branch == Branch::Image ? tokens + 1 : tokens; }
  /// Row projected to the shared space: CLS for image, last token for text.
  std::size_t readout_row() const { return branch == Branch::Image ? 0 : tokens - 1; }
  void validate() const;
};

/// Frozen-backbone block: h + ReLU((u + mean_rows(u))·W + b) with u = LN(h).
/// The row-mean term is the only place tokens exchange information.
struct BlockParams {
  Tensor weight;  // d_h × d_h
  Tensor bias;    // 1 × d_h
};

struct EncoderState {
  EncoderConfig config;
  Tensor embedding;  // raw_width × d_h
  Tensor cls;        // 1 × d_h, image branch only
  std::vector<BlockParams> blocks;
  std::vector<AdapterParams> adapters;  // empty, or one per layer
  Tensor projection;                    // d_h × d
  bool backbone_frozen = true;

  bool has_adapters() const noexcept { return !adapters.empty(); }
  void validate() const;
};

EncoderState init_encoder(const EncoderConfig& config, std::mt19937_64& rng);
/// Adds one freshly initialized adapter per layer.
void attach_adapters(EncoderState& state, const AdapterShape& shape, Orientation orientation,
                     double alpha, std::mt19937_64& rng);

/// Layer-0 representations: raw·E, with the CLS row prepended on the image branch.
Tensor embed(const Tensor& raw, const EncoderState& state);

struct BlockCache {
  LayerNormResult norm;
  Tensor mixed;
  Tensor pre;
};

struct BlockOutput {
  Tensor out;
  BlockCache cache;
};

BlockOutput block_forward(const Tensor& h, const BlockParams& block);

struct BlockGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};
BlockGrads block_backward(const Tensor& grad_out, const Tensor& h, const BlockCache& cache,
                          const BlockParams& block);

struct EncodeCache {
  Tensor raw;
  std::vector<Tensor> hidden;  // h_0 … h_L
  std::vector<BlockCache> blocks;
  std::vector<AdapterOutput> adapters;  // one per layer when adapters ran
  bool adapters_enabled = false;
};

struct Encoded {
  Tensor output;  // shape {d}
  EncodeCache cache;
};

/// h_i = block_i(h_{i-1}) + α·adapter_i(h_{i-1}); output = h_L[readout]·P.
Encoded encode(const Tensor& raw, const EncoderState& state, bool adapters_enabled);

/// Per-layer gradients injected directly at the adapter outputs and gates by
/// auxiliary losses. Empty tensors mean "no contribution".
struct AdapterUpstream {
  std::vector<Tensor> delta;
  std::vector<Tensor> gates;
};

struct EncoderGrads {
  std::vector<AdapterGrads> adapters;
  Tensor embedding;
  Tensor cls;
  std::vector<BlockGrads> blocks;
  Tensor projection;
  bool has_backbone = false;
};

/// Zeroed gradient buffers. Backbone buffers are allocated only when requested.
EncoderGrads zero_grads(const EncoderState& state, bool with_backbone);

/// Reverse pass through one encode() call, accumulating into `grads`.
/// Backbone gradients are computed iff grads.has_backbone.
void encode_backward(const Tensor& grad_output, const AdapterUpstream& upstream,
                     const EncodeCache& cache, const EncoderState& state, EncoderGrads& grads);

}  // namespace asymoe
