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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asymoe/datagen.hpp"
#include "asymoe/errors.hpp"
#include "asymoe/forward_backward.hpp"
#include "asymoe/model.hpp"
#include "asymoe/objectives.hpp"
#include "json.hpp"

namespace asymoe {

struct TrainConfig {
  std::size_t shots = 16;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  double lr = 0.0015;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t warmup_epochs = 1;
  std::uint64_t seed = 1;
  LossWeights weights;
  ModelConfig model;
  BalanceScope balance_scope = BalanceScope::Both;
  /// Global gradient-norm clip; 0 disables clipping.
  double grad_clip = 0.0;
  /// Steps between metrics records; epoch ends are always logged.
  std::size_t log_every = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Exactly `shots` samples per class, drawn without replacement with a seeded
/// shuffle. The result is ordered by class, then by position in `split`.
Split few_shot_sample(const Split& split, std::size_t shots, std::uint64_t seed);

/// Linear warmup from 0 to base_lr over warmup_steps, then cosine decay that
/// reaches 0 at the last step (total_steps - 1).
double lr_schedule(std::size_t step, std::size_t total_steps, std::size_t warmup_steps,
                   double base_lr);

struct SgdConfig {
  double lr = 0.0;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

/// One optimizer-visible parameter. Weight decay applies only when `decay`.
struct ParamSlot {
  Tensor* value = nullptr;
  const Tensor* grad = nullptr;
  bool decay = false;
};

struct SgdState {
  std::vector<Tensor> velocity;
};

/// g' = g + wd·p (decay slots only); v = μ·v + g'; p -= lr·v.
void sgd_step(std::span<const ParamSlot> params, SgdState& state, const SgdConfig& cfg);

/// Accuracies in percent plus routing and dampening diagnostics.
struct EvalSummary {
  double base_accuracy = 0.0;
  double novel_accuracy = 0.0;
  double ood_accuracy = 0.0;
  double hm = 0.0;
  /// max over adapted layers and experts of |batch-mean gate - 1/n|,
  /// measured on base-test images and base prompts.
  double gate_deviation = 0.0;
  /// Mean over OOD samples and image layers of ‖Δv‖.
  double ood_delta_norm = 0.0;
};

void to_json(nlohmann::json& j, const EvalSummary& s);

/// Percent of `split` classified correctly among `classes`.
double accuracy(const DualEncoder& model, const Dataset& data, const Split& split,
                const std::vector<std::size_t>& classes);
EvalSummary evaluate(const DualEncoder& model, const Dataset& data);

struct MetricsRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;
  double train_accuracy = 0.0;
  std::optional<EvalSummary> eval;  // epoch ends only
  std::vector<std::vector<double>> image_gate_means;
  std::vector<std::vector<double>> text_gate_means;
  double image_delta_norm = 0.0;
  double text_delta_norm = 0.0;
};

void to_json(nlohmann::json& j, const MetricsRecord& r);

/// Thrown when the total loss or a gradient becomes non-finite. Carries the
/// records logged so far; the last one is the failing step.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, std::vector<MetricsRecord> log)
      : NumericError(what), log_(std::move(log)) {}
  const std::vector<MetricsRecord>& log() const noexcept { return log_; }

 private:
  std::vector<MetricsRecord> log_;
};

struct TrainResult {
  DualEncoder model;
  std::vector<MetricsRecord> log;
};

/// Called after the last step of each epoch with the zero-based epoch index.
using EpochHook = std::function<void(std::size_t epoch, const DualEncoder& model)>;

/// Few-shot training on dataset.base_train with the total objective.
TrainResult train(DualEncoder model, const Dataset& data, const TrainConfig& config,
                  const EpochHook& on_epoch_end = {});

/// Fresh model from config.model and config.seed, then train().
TrainResult train_from_scratch(const Dataset& data, const TrainConfig& config,
                               const EpochHook& on_epoch_end = {});

enum class SweepAxis { Experts, Rank, Alpha, LambdaBias, LambdaBal };

std::string to_string(SweepAxis a);
SweepAxis sweep_axis_from_string(const std::string& s);
/// Value grids of the published hyperparameter analysis, keyed
/// "grid-n", "grid-r", "grid-alpha", "grid-lambda_bias", "grid-lambda_bal".
std::pair<SweepAxis, std::vector<double>> sweep_preset(const std::string& name);
TrainConfig with_axis_value(TrainConfig config, SweepAxis axis, double value);

struct SweepRow {
  double value = 0.0;
  EvalSummary summary;
};

std::vector<SweepRow> sweep(SweepAxis axis, std::span<const double> values,
                            const TrainConfig& base, const Dataset& data);

}  // namespace asymoe
