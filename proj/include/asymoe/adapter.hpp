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
#include <random>
#include <string>
#include <vector>

#include "asymoe/tensor.hpp"

namespace asymoe {

/// Which side of the bottleneck is shared.
///
/// OneDownManyUps: one shared down-projection feeding n gated up-experts.
/// ManyDownsOneUp: n gated down-projections aggregated before one up-projection.
enum class Orientation { OneDownManyUps, ManyDownsOneUp };

std::string to_string(Orientation o);
Orientation orientation_from_string(const std::string& s);

struct AdapterShape {
  std::size_t hidden = 0;   // d_h
  std::size_t rank = 0;     // r, bottleneck width
  std::size_t experts = 0;  // n

  void validate() const;
};

/// Parameters of one adapter block.
///
/// For OneDownManyUps `down` holds one d_h×r matrix and `up` holds n r×d_h
/// matrices; for ManyDownsOneUp the counts swap. `router` is d_h×n in both.
/// `alpha` is the residual scale applied by the enclosing encoder.
struct AdapterParams {
  Orientation orientation = Orientation::OneDownManyUps;
  std::vector<Tensor> down;
  std::vector<Tensor> up;
  Tensor router;
  double alpha = 0.0;

  std::size_t hidden() const { return router.rows(); }
  std::size_t rank() const { return down.front().cols(); }
  std::size_t experts() const { return router.cols(); }
  AdapterShape shape() const { return {hidden(), rank(), experts()}; }

  /// Throws ConfigError/DimensionError unless the matrices match the orientation.
  void validate() const;

  static AdapterParams zeros(const AdapterShape& shape, Orientation orientation, double alpha);
};

/// Down and router drawn from U(-1/√d_h, 1/√d_h); up-projections are zero so
/// the adapter output is exactly zero until the first update.
AdapterParams init_adapter(const AdapterShape& shape, Orientation orientation, double alpha,
                           std::mt19937_64& rng);

/// Tensor of the same layout as AdapterParams, used for gradients and
/// optimizer state.
struct AdapterGrads {
  std::vector<Tensor> down;
  std::vector<Tensor> up;
  Tensor router;
  /// Gradient with respect to the adapter input z.
  Tensor input;
  /// Gradient reaching each expert branch output: dL/dE_k (T×d_h) for
  /// OneDownManyUps, dL/dZ_k (T×r) for ManyDownsOneUp.
  std::vector<Tensor> branch;
  /// dL/dZ_agg (T×r); ManyDownsOneUp only.
  Tensor aggregate;
};

/// Activations kept from the forward pass.
struct AdapterCache {
  Tensor input;
  std::vector<Tensor> pre;         // z·W_down, one per down-projection
  std::vector<Tensor> act;         // ReLU(pre)
  std::vector<Tensor> expert_out;  // act·W_up_k, OneDownManyUps only
  Tensor aggregate;                // Σ_k g_k·act_k, ManyDownsOneUp only
  Tensor gates;

  bool empty() const noexcept { return input.empty(); }
};

struct AdapterOutput {
  Tensor delta;  // T×d_h, unscaled by alpha
  Tensor gates;  // T×n
  AdapterCache cache;
};

/// softmax(z·W_g) per token row.
Tensor router_gates(const Tensor& z, const Tensor& router);

/// delta = Σ_k g_k ⊙ ReLU(z·W_down)·W_up_k. Requires OneDownManyUps.
AdapterOutput adapter_forward(const Tensor& z, const AdapterParams& params);
/// delta = (Σ_k g_k ⊙ ReLU(z·W_down_k))·W_up. Requires ManyDownsOneUp.
AdapterOutput inverted_forward(const Tensor& z, const AdapterParams& params);
/// Dispatches on params.orientation.
AdapterOutput forward(const Tensor& z, const AdapterParams& params);

/// Reverse pass. `grad_gates` may be empty when no loss reads the gates
/// directly. Throws UsageError on an empty cache.
AdapterGrads adapter_backward(const Tensor& grad_delta, const Tensor& grad_gates,
                              const AdapterCache& cache, const AdapterParams& params);

AdapterGrads zeros_like(const AdapterParams& params);
void accumulate(AdapterGrads& into, const AdapterGrads& g);

/// Per-layer × per-sample × per-token × per-expert gate weights.
class GateTensor {
 public:
  GateTensor() = default;
  GateTensor(std::size_t layers, std::size_t samples, std::size_t tokens, std::size_t experts);

  std::size_t layers() const noexcept { return layers_; }
  std::size_t samples() const noexcept { return samples_; }
  std::size_t tokens() const noexcept { return tokens_; }
  std::size_t experts() const noexcept { return experts_; }
  bool empty() const noexcept { return values_.empty(); }

  double& at(std::size_t l, std::size_t s, std::size_t t, std::size_t k) {
    return values_[((l * samples_ + s) * tokens_ + t) * experts_ + k];
  }
  double at(std::size_t l, std::size_t s, std::size_t t, std::size_t k) const {
    return values_[((l * samples_ + s) * tokens_ + t) * experts_ + k];
  }

  /// Copies a T×n gate matrix into position (layer, sample).
  void set(std::size_t layer, std::size_t sample, const Tensor& gates);
  Tensor slice(std::size_t layer, std::size_t sample) const;

  /// Throws NumericError unless every expert-axis slice is nonnegative and
  /// sums to one within `tol`.
  void validate(double tol = 1e-9) const;

 private:
  std::size_t layers_ = 0, samples_ = 0, tokens_ = 0, experts_ = 0;
  std::vector<double> values_;
};

}  // namespace asymoe
