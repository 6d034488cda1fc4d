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


#include "asymoe/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "asymoe/errors.hpp"

namespace asymoe {
namespace {

constexpr std::uint64_t kShuffleTag = 0x73687566;  // "shuf"
constexpr std::uint64_t kFewShotTag = 0x66657773;  // "fews"

std::vector<Tensor> prompts_for(const Dataset& data, const std::vector<std::size_t>& classes) {
  std::vector<Tensor> out;
  out.reserve(classes.size());
  for (std::size_t c : classes) out.push_back(data.prompts.at(c));
  return out;
}

std::size_t local_index(const std::vector<std::size_t>& classes, std::size_t label) {
  const auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end()) throw UsageError("label " + std::to_string(label) + " outside the class subset");
  return static_cast<std::size_t>(it - classes.begin());
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void check_compatible(const DualEncoder& model, const Dataset& data) {
  const ModelConfig& m = model.config;
  const SyntheticTaskConfig& d = data.config;
  if (m.raw_width != d.token_width || m.image_tokens != d.tokens_per_sample ||
      m.text_tokens != d.prompt_tokens)
    throw ConfigError("model input shape does not match the dataset");
}

double max_gate_deviation(const GateTensor& g, double worst) {
  if (g.empty()) return worst;
  const double target = 1.0 / static_cast<double>(g.experts());
  for (const auto& layer : mean_gates(g))
    for (double m : layer) worst = std::max(worst, std::abs(m - target));
  return worst;
}

}  // namespace

void TrainConfig::validate() const {
  if (shots == 0) throw ConfigError("shots must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (warmup_epochs > epochs && epochs > 0) throw ConfigError("warmup_epochs exceeds epochs");
  if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0");
  if (log_every == 0) throw ConfigError("log_every must be >= 1");
  weights.validate();
  model.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"shots", c.shots},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"lr", c.lr},
       {"momentum", c.momentum},
       {"weight_decay", c.weight_decay},
       {"warmup_epochs", c.warmup_epochs},
       {"seed", c.seed},
       {"weights", c.weights},
       {"model", c.model},
       {"balance_scope", to_string(c.balance_scope)},
       {"grad_clip", c.grad_clip},
       {"log_every", c.log_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  io::require_known_keys(j,
                         {"shots", "batch_size", "epochs", "lr", "momentum", "weight_decay",
                          "warmup_epochs", "seed", "weights", "model", "balance_scope",
                          "grad_clip", "log_every"},
                         "train config");
  c.shots = j.value("shots", c.shots);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.seed = j.value("seed", c.seed);
  if (j.contains("weights")) c.weights = j.at("weights").get<LossWeights>();
  if (j.contains("model")) {
    ModelConfig m = c.model;
    from_json(j.at("model"), m);
    c.model = m;
  }
  if (j.contains("balance_scope"))
    c.balance_scope = balance_scope_from_string(j.at("balance_scope").get<std::string>());
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.log_every = j.value("log_every", c.log_every);
}

Split few_shot_sample(const Split& split, std::size_t shots, std::uint64_t seed) {
  if (shots == 0) throw ConfigError("shots must be >= 1");
  std::vector<std::size_t> labels;
  for (const Sample& s : split)
    if (std::find(labels.begin(), labels.end(), s.label) == labels.end()) labels.push_back(s.label);
  std::sort(labels.begin(), labels.end());

  Split out;
  for (std::size_t label : labels) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split[i].label == label) members.push_back(i);
    if (members.size() < shots)
      throw DegenerateInputError("class " + std::to_string(label) + " has " +
                                 std::to_string(members.size()) + " samples, fewer than " +
                                 std::to_string(shots) + " shots");
    std::seed_seq seq{seed, kFewShotTag, static_cast<std::uint64_t>(label)};
    std::mt19937_64 rng(seq);
    // Partial Fisher-Yates keeps the draw independent of the standard library.
    for (std::size_t i = 0; i < shots; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (members.size() - i));
      std::swap(members[i], members[j]);
    }
    members.resize(shots);
    std::sort(members.begin(), members.end());
    for (std::size_t i : members) out.push_back(split[i]);
  }
  return out;
}

double lr_schedule(std::size_t step, std::size_t total_steps, std::size_t warmup_steps,
                   double base_lr) {
  if (step >= total_steps)
    throw UsageError("lr_schedule: step " + std::to_string(step) + " outside [0, " +
                     std::to_string(total_steps) + ")");
  if (warmup_steps >= total_steps) throw UsageError("lr_schedule: warmup covers every step");
  if (step < warmup_steps)
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const std::size_t span = total_steps - 1 - warmup_steps;
  if (span == 0) return base_lr;
  const double t = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void sgd_step(std::span<const ParamSlot> params, SgdState& state, const SgdConfig& cfg) {
  if (state.velocity.empty()) {
    for (const ParamSlot& p : params) state.velocity.emplace_back(p.value->shape());
  }
  if (state.velocity.size() != params.size()) throw DimensionError("sgd_step: velocity count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamSlot& p = params[i];
    Tensor& v = state.velocity[i];
    if (p.grad->shape() != p.value->shape() || v.shape() != p.value->shape())
      throw DimensionError("sgd_step: shape mismatch in slot " + std::to_string(i));
    auto pv = p.value->values();
    const auto gv = p.grad->values();
    auto vv = v.values();
    const double wd = p.decay ? cfg.weight_decay : 0.0;
    for (std::size_t k = 0; k < pv.size(); ++k) {
      vv[k] = cfg.momentum * vv[k] + (gv[k] + wd * pv[k]);
      pv[k] -= cfg.lr * vv[k];
    }
  }
}

void to_json(nlohmann::json& j, const EvalSummary& s) {
  j = {{"base_accuracy", s.base_accuracy},
       {"novel_accuracy", s.novel_accuracy},
       {"ood_accuracy", s.ood_accuracy},
       {"hm", s.hm},
       {"gate_deviation", s.gate_deviation},
       {"ood_delta_norm", s.ood_delta_norm}};
}

double accuracy(const DualEncoder& model, const Dataset& data, const Split& split,
                const std::vector<std::size_t>& classes) {
  if (split.empty()) throw DegenerateInputError("accuracy: empty split");
  ClassifierHead head = model.head;
  head.class_embeddings = encode_class_embeddings(model, prompts_for(data, classes));
  std::size_t correct = 0;
  for (const Sample& s : split) {
    const Encoded e = encode(s.tokens, model.image, true);
    const Tensor p = classify(e.output.values(), head);
    if (argmax(p.values()) == local_index(classes, s.label)) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(split.size());
}

EvalSummary evaluate(const DualEncoder& model, const Dataset& data) {
  EvalSummary s;
  s.base_accuracy = accuracy(model, data, data.base_test, data.base_classes);
  s.novel_accuracy = accuracy(model, data, data.novel_test, data.novel_classes);
  s.ood_accuracy = accuracy(model, data, data.ood_test, data.base_classes);
  s.hm = harmonic_mean(s.base_accuracy, s.novel_accuracy);

  ObjectiveOptions opts;
  opts.compute_grads = false;
  std::vector<const Tensor*> images;
  std::vector<std::size_t> labels;
  for (const Sample& x : data.base_test) {
    images.push_back(&x.tokens);
    labels.push_back(local_index(data.base_classes, x.label));
  }
  const ObjectiveResult base =
      evaluate_objective(model, prompts_for(data, data.base_classes), images, labels, opts);
  s.gate_deviation = max_gate_deviation(base.text_gates, max_gate_deviation(base.image_gates, 0.0));

  images.clear();
  labels.clear();
  for (const Sample& x : data.ood_test) {
    images.push_back(&x.tokens);
    labels.push_back(local_index(data.base_classes, x.label));
  }
  const ObjectiveResult ood =
      evaluate_objective(model, prompts_for(data, data.base_classes), images, labels, opts);
  s.ood_delta_norm = mean_of(ood.loss.delta_norms);
  return s;
}

void to_json(nlohmann::json& j, const MetricsRecord& r) {
  j = {{"step", r.step},
       {"epoch", r.epoch},
       {"lr", r.lr},
       {"loss", r.loss},
       {"train_accuracy", r.train_accuracy},
       {"image_gate_means", r.image_gate_means},
       {"text_gate_means", r.text_gate_means},
       {"image_delta_norm", r.image_delta_norm},
       {"text_delta_norm", r.text_delta_norm}};
  j["eval"] = r.eval ? nlohmann::json(*r.eval) : nlohmann::json(nullptr);
}

TrainResult train(DualEncoder model, const Dataset& data, const TrainConfig& config,
                  const EpochHook& on_epoch_end) {
  config.validate();
  check_compatible(model, data);
  TrainResult result;
  if (config.epochs == 0) {
    result.model = std::move(model);
    return result;
  }

  const Split train_set = few_shot_sample(data.base_train, config.shots, config.seed);
  const std::vector<Tensor> prompts = prompts_for(data, data.base_classes);
  const std::size_t per_epoch = (train_set.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total = per_epoch * config.epochs;
  const std::size_t warmup = std::min(per_epoch * config.warmup_epochs, total - 1);

  ObjectiveOptions opts;
  opts.weights = config.weights;
  opts.balance_scope = config.balance_scope;

  // Trainable slots: adapters of both branches, then τ when learnable.
  auto collect = [&](ModelGrads& g, Tensor& tau_value, Tensor& tau_grad) {
    std::vector<ParamSlot> slots;
    auto add_branch = [&](EncoderState& state, EncoderGrads& grads) {
      if (grads.adapters.size() != state.adapters.size()) return;
      for (std::size_t l = 0; l < state.adapters.size(); ++l) {
        AdapterParams& a = state.adapters[l];
        AdapterGrads& ag = grads.adapters[l];
        for (std::size_t k = 0; k < a.down.size(); ++k) slots.push_back({&a.down[k], &ag.down[k], true});
        for (std::size_t k = 0; k < a.up.size(); ++k) slots.push_back({&a.up[k], &ag.up[k], true});
        slots.push_back({&a.router, &ag.router, false});
      }
    };
    add_branch(model.image, g.image);
    add_branch(model.text, g.text);
    if (model.head.learn_tau) slots.push_back({&tau_value, &tau_grad, false});
    return slots;
  };

  SgdState sgd;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{config.seed, kShuffleTag, static_cast<std::uint64_t>(epoch)};
    std::mt19937_64 rng(seq);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);

    for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
      std::vector<const Tensor*> images;
      std::vector<std::size_t> labels;
      const std::size_t end = std::min(order.size(), (b + 1) * config.batch_size);
      for (std::size_t i = b * config.batch_size; i < end; ++i) {
        images.push_back(&train_set[order[i]].tokens);
        labels.push_back(local_index(data.base_classes, train_set[order[i]].label));
      }

      ObjectiveResult r = evaluate_objective(model, prompts, images, labels, opts);
      const double lr = lr_schedule(step, total, warmup, config.lr);

      MetricsRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.lr = lr;
      rec.loss = r.loss;
      std::size_t correct = 0;
      for (std::size_t j = 0; j < labels.size(); ++j)
        if (argmax(r.probabilities.row(j)) == labels[j]) ++correct;
      rec.train_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
      if (!r.image_gates.empty()) rec.image_gate_means = mean_gates(r.image_gates);
      if (!r.text_gates.empty()) rec.text_gate_means = mean_gates(r.text_gates);
      rec.image_delta_norm = mean_of(r.loss.delta_norms);
      rec.text_delta_norm = mean_of(r.text_delta_norms);

      if (!std::isfinite(r.loss.total)) {
        result.log.push_back(rec);
        throw DivergenceError("training diverged at step " + std::to_string(step) +
                                  ": non-finite loss",
                              std::move(result.log));
      }

      Tensor tau_value = Tensor::vector({model.head.tau});
      Tensor tau_grad = Tensor::vector({r.grads.tau});
      const std::vector<ParamSlot> slots = collect(r.grads, tau_value, tau_grad);

      double clip_scale = 1.0;
      if (config.grad_clip > 0.0) {
        double sq = 0.0;
        for (const ParamSlot& s : slots)
          for (double g : s.grad->values()) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > config.grad_clip) clip_scale = config.grad_clip / norm;
      }
      std::vector<Tensor> clipped;
      std::vector<ParamSlot> stepped = slots;
      if (clip_scale != 1.0) {
        clipped.reserve(slots.size());
        for (std::size_t i = 0; i < slots.size(); ++i) {
          clipped.push_back(*slots[i].grad * clip_scale);
          stepped[i].grad = &clipped.back();
        }
      }
      sgd_step(stepped, sgd, {lr, config.momentum, config.weight_decay});
      if (model.head.learn_tau) {
        model.head.tau = tau_value.values()[0];
        if (!(model.head.tau > 0.0)) {
          result.log.push_back(rec);
          throw DivergenceError("temperature left the positive range at step " +
                                    std::to_string(step),
                                std::move(result.log));
        }
      }

      const bool epoch_end = b + 1 == per_epoch;
      if (epoch_end) rec.eval = evaluate(model, data);
      if (epoch_end || step % config.log_every == 0) result.log.push_back(std::move(rec));
      if (epoch_end && on_epoch_end) on_epoch_end(epoch, model);
    }
  }
  result.model = std::move(model);
  return result;
}

TrainResult train_from_scratch(const Dataset& data, const TrainConfig& config,
                               const EpochHook& on_epoch_end) {
  TrainConfig c = config;
  c.model.raw_width = data.config.token_width;
  c.model.image_tokens = data.config.tokens_per_sample;
  c.model.text_tokens = data.config.prompt_tokens;
  return train(init_model(c.model, c.seed), data, c, on_epoch_end);
}

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::Experts: return "n";
    case SweepAxis::Rank: return "r";
    case SweepAxis::Alpha: return "alpha";
    case SweepAxis::LambdaBias: return "lambda_bias";
    case SweepAxis::LambdaBal: return "lambda_bal";
  }
  return "n";
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  for (SweepAxis a : {SweepAxis::Experts, SweepAxis::Rank, SweepAxis::Alpha, SweepAxis::LambdaBias,
                      SweepAxis::LambdaBal})
    if (to_string(a) == s) return a;
  throw UsageError("unknown sweep axis '" + s + "' (n, r, alpha, lambda_bias, lambda_bal)");
}

std::pair<SweepAxis, std::vector<double>> sweep_preset(const std::string& name) {
  if (name == "grid-n") return {SweepAxis::Experts, {1, 2, 3, 4, 5}};
  if (name == "grid-r") return {SweepAxis::Rank, {8, 16, 32, 64, 128}};
  if (name == "grid-alpha") return {SweepAxis::Alpha, {0.0001, 0.0005, 0.001, 0.005, 0.01}};
  if (name == "grid-lambda_bias") return {SweepAxis::LambdaBias, {0.1, 0.2, 0.3, 0.4, 0.5}};
  if (name == "grid-lambda_bal") return {SweepAxis::LambdaBal, {0.01, 0.05, 0.1, 0.15, 0.2}};
  throw UsageError("unknown sweep preset '" + name + "'");
}

TrainConfig with_axis_value(TrainConfig config, SweepAxis axis, double value) {
  auto count = [&](const char* what) {
    if (!(value >= 1.0) || value != std::floor(value))
      throw ConfigError(std::string(what) + " must be a positive integer");
    return static_cast<std::size_t>(value);
  };
  switch (axis) {
    case SweepAxis::Experts: config.model.experts = count("n"); break;
    case SweepAxis::Rank: config.model.rank = count("r"); break;
    case SweepAxis::Alpha: config.model.alpha = value; break;
    case SweepAxis::LambdaBias: config.weights.lambda_bias = value; break;
    case SweepAxis::LambdaBal: config.weights.lambda_bal = value; break;
  }
  config.validate();
  return config;
}

std::vector<SweepRow> sweep(SweepAxis axis, std::span<const double> values, const TrainConfig& base,
                            const Dataset& data) {
  if (values.empty()) throw UsageError("sweep: empty value list");
  std::vector<SweepRow> rows;
  for (double v : values) {
    const TrainResult r = train_from_scratch(data, with_axis_value(base, axis, v));
    rows.push_back({v, evaluate(r.model, data)});
  }
  return rows;
}

}  // namespace asymoe
