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

#include "asymoe/forward_backward.hpp"

#include "asymoe/errors.hpp"

namespace asymoe {
namespace {

GateTensor collect_gates(const std::vector<Encoded>& encoded, std::size_t layers) {
  if (encoded.empty() || !encoded.front().cache.adapters_enabled) return {};
  const Tensor& first = encoded.front().cache.adapters.front().gates;
  GateTensor g(layers, encoded.size(), first.rows(), first.cols());
  for (std::size_t s = 0; s < encoded.size(); ++s)
    for (std::size_t l = 0; l < layers; ++l) g.set(l, s, encoded[s].cache.adapters[l].gates);
  return g;
}

}  // namespace

std::string to_string(BalanceScope s) {
  switch (s) {
    case BalanceScope::Both: return "both";
    case BalanceScope::Image: return "image";
    case BalanceScope::Text: return "text";
  }
  return "both";
}

BalanceScope balance_scope_from_string(const std::string& s) {
  if (s == "both") return BalanceScope::Both;
  if (s == "image") return BalanceScope::Image;
  if (s == "text") return BalanceScope::Text;
  throw ConfigError("unknown balance scope '" + s + "'");
}

ObjectiveResult evaluate_objective(const DualEncoder& model, const std::vector<Tensor>& prompts,
                                   std::span<const Tensor* const> images,
                                   std::span<const std::size_t> labels,
                                   const ObjectiveOptions& options) {
  if (images.size() != labels.size()) throw DimensionError("objective: images vs labels");
  if (images.empty()) throw DegenerateInputError("objective: empty batch");
  if (prompts.empty()) throw DegenerateInputError("objective: no classes");
  options.weights.validate();

  const std::size_t batch = images.size();
  const std::size_t layers = model.config.layers;
  ObjectiveResult r;

  std::vector<Encoded> text;
  for (const Tensor& p : prompts) text.push_back(encode(p, model.text, options.adapters_enabled));
  std::vector<Encoded> image;
  for (const Tensor* x : images) image.push_back(encode(*x, model.image, options.adapters_enabled));

  ClassifierHead head = model.head;
  head.class_embeddings = Tensor(Shape{prompts.size(), model.config.shared_dim});
  for (std::size_t c = 0; c < prompts.size(); ++c)
    std::copy(text[c].output.values().begin(), text[c].output.values().end(),
              head.class_embeddings.row(c).begin());
  r.class_embeddings = head.class_embeddings;

  r.probabilities = Tensor(Shape{batch, prompts.size()});
  std::vector<double> kappa(batch);
  for (std::size_t j = 0; j < batch; ++j) {
    const Tensor p = classify(image[j].output.values(), head);
    std::copy(p.values().begin(), p.values().end(), r.probabilities.row(j).begin());
    kappa[j] = confidence(p);
    r.image_outputs.push_back(image[j].output);
  }
  if (options.fixed_kappa) {
    if (options.fixed_kappa->size() != batch) throw UsageError("objective: fixed_kappa length");
    kappa = *options.fixed_kappa;
  }

  const double ce = cross_entropy(r.probabilities, labels);

  DeltaBatch deltas;
  std::vector<double> delta_norms;
  if (image.front().cache.adapters_enabled) {
    delta_norms.assign(layers, 0.0);
    for (const Encoded& e : image) {
      std::vector<Tensor> per_layer;
      for (std::size_t l = 0; l < layers; ++l) {
        per_layer.push_back(e.cache.adapters[l].delta);
        delta_norms[l] += l2_norm(per_layer.back()) / static_cast<double>(batch);
      }
      deltas.push_back(std::move(per_layer));
    }
  }
  const double bias = deltas.empty() ? 0.0 : uaad_loss(kappa, deltas);

  if (text.front().cache.adapters_enabled) {
    r.text_delta_norms.assign(layers, 0.0);
    for (const Encoded& e : text)
      for (std::size_t l = 0; l < layers; ++l)
        r.text_delta_norms[l] +=
            l2_norm(e.cache.adapters[l].delta) / static_cast<double>(text.size());
  }

  r.image_gates = collect_gates(image, layers);
  r.text_gates = collect_gates(text, layers);
  std::vector<GateTensor> balanced;
  const bool use_image = options.balance_scope != BalanceScope::Text && !r.image_gates.empty();
  const bool use_text = options.balance_scope != BalanceScope::Image && !r.text_gates.empty();
  if (use_image) balanced.push_back(r.image_gates);
  if (use_text) balanced.push_back(r.text_gates);
  const double bal = balanced.empty() ? 0.0 : load_balance_loss(balanced);

  r.loss = total_loss(ce, bias, bal, options.weights);
  r.loss.kappa = kappa;
  r.loss.delta_norms = delta_norms;
  if (!options.compute_grads) return r;

  r.grads.image = zero_grads(model.image, options.backbone_grads);
  r.grads.text = zero_grads(model.text, options.backbone_grads);

  const Tensor d_logits = cross_entropy_logit_grad(r.probabilities, labels);
  Tensor d_embeddings(head.class_embeddings.shape());
  std::vector<std::vector<double>> d_outputs(batch);
  for (std::size_t j = 0; j < batch; ++j) {
    ClassifierGrads cg = classify_backward(image[j].output.values(), head, d_logits.row(j));
    d_embeddings += cg.embeddings;
    r.grads.tau += cg.tau;
    d_outputs[j] = std::move(cg.x);
  }

  const double lb = options.weights.lambda_bias;
  const double lg = options.weights.lambda_bal;
  DeltaBatch d_deltas;
  if (lb > 0.0 && !deltas.empty()) d_deltas = uaad_backward(kappa, deltas);
  std::vector<GateTensor> d_gates;
  if (lg > 0.0 && !balanced.empty()) d_gates = load_balance_backward(balanced);
  const GateTensor* d_image_gates = lg > 0.0 && use_image ? &d_gates.front() : nullptr;
  const GateTensor* d_text_gates = lg > 0.0 && use_text ? &d_gates.back() : nullptr;

  for (std::size_t j = 0; j < batch; ++j) {
    AdapterUpstream up;
    for (std::size_t l = 0; l < layers && image[j].cache.adapters_enabled; ++l) {
      up.delta.push_back(d_deltas.empty() ? Tensor() : d_deltas[j][l] * lb);
      up.gates.push_back(d_image_gates ? d_image_gates->slice(l, j) * lg : Tensor());
    }
    const Tensor g(Shape{d_outputs[j].size()}, d_outputs[j]);
    encode_backward(g, up, image[j].cache, model.image, r.grads.image);
  }
  for (std::size_t c = 0; c < prompts.size(); ++c) {
    AdapterUpstream up;
    for (std::size_t l = 0; l < layers && text[c].cache.adapters_enabled; ++l)
      up.gates.push_back(d_text_gates ? d_text_gates->slice(l, c) * lg : Tensor());
    const auto row = d_embeddings.row(c);
    const Tensor g(Shape{row.size()}, std::vector<double>(row.begin(), row.end()));
    encode_backward(g, up, text[c].cache, model.text, r.grads.text);
  }
  return r;
}

}  // namespace asymoe
