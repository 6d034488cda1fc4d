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

#include "asymoe/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "asymoe/errors.hpp"

namespace asymoe {

void ClassifierHead::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("classifier: tau must be > 0");
  if (num_classes() < 1) throw ConfigError("classifier: need at least one class embedding");
  for (std::size_t c = 0; c < class_embeddings.rows(); ++c)
    if (l2_norm(class_embeddings.row(c)) == 0.0)
      throw DegenerateInputError("classifier: class embedding " + std::to_string(c) +
                                 " is zero");
}

Tensor class_logits(std::span<const double> x, const ClassifierHead& head) {
  head.validate();
  Tensor logits(Shape{head.num_classes()});
  for (std::size_t c = 0; c < head.num_classes(); ++c)
    logits[c] = cosine_similarity(x, head.class_embeddings.row(c)) / head.tau;
  return logits;
}

Tensor classify(std::span<const double> x, const ClassifierHead& head) {
  return softmax(class_logits(x, head), 0);
}

double confidence(const Tensor& probabilities) {
  return *std::max_element(probabilities.values().begin(), probabilities.values().end());
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

ClassifierGrads classify_backward(std::span<const double> x, const ClassifierHead& head,
                                  std::span<const double> grad_logits) {
  const std::size_t nc = head.num_classes();
  if (grad_logits.size() != nc) throw DimensionError("classify_backward: logit gradient length");
  ClassifierGrads g;
  g.x.assign(x.size(), 0.0);
  g.embeddings = Tensor(head.class_embeddings.shape());
  for (std::size_t c = 0; c < nc; ++c) {
    const auto w = head.class_embeddings.row(c);
    const CosineGradient cg = cosine_similarity_backward(x, w, grad_logits[c] / head.tau);
    for (std::size_t i = 0; i < x.size(); ++i) g.x[i] += cg.dx[i];
    auto dw = g.embeddings.row(c);
    for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += cg.dw[i];
    g.tau -= grad_logits[c] * cosine_similarity(x, w) / (head.tau * head.tau);
  }
  return g;
}

}  // namespace asymoe
