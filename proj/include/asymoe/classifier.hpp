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

#include <span>
#include <vector>

#include "asymoe/tensor.hpp"

namespace asymoe {

/// Cosine/temperature classifier over N_c class embeddings in the shared space.
struct ClassifierHead {
  double tau = 0.07;
  bool learn_tau = false;
  Tensor class_embeddings;  // N_c × d

  std::size_t num_classes() const { return class_embeddings.empty() ? 0 : class_embeddings.rows(); }
  void validate() const;
};

/// cos(x, w_c)/τ for every class.
Tensor class_logits(std::span<const double> x, const ClassifierHead& head);

/// p_c = softmax_c(cos(x, w_c)/τ). Throws DegenerateInputError on a zero vector.
Tensor classify(std::span<const double> x, const ClassifierHead& head);

/// κ = max_c p_c.
double confidence(const Tensor& probabilities);

std::size_t argmax(std::span<const double> v);

struct ClassifierGrads {
  std::vector<double> x;  // dL/dx
  Tensor embeddings;      // dL/dW, N_c × d
  double tau = 0.0;
};

/// Pulls dL/dlogits back through the cosine/temperature logits.
ClassifierGrads classify_backward(std::span<const double> x, const ClassifierHead& head,
                                  std::span<const double> grad_logits);

}  // namespace asymoe
