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

#include <functional>
#include <string>

#include "asymoe/tensor.hpp"

namespace asymoe {

/// Central-difference gradient oracle settings.
struct GradCheckConfig {
  double epsilon = 1e-5;
  /// Maximum allowed relative error, see relative_error().
  double tolerance = 1e-4;

  void validate() const;
};

using ScalarFunction = std::function<double(const Tensor&)>;

/// Central-difference estimate of ∇f at theta, one coordinate at a time in
/// index order. Throws NumericError if f is non-finite at any probe point.
Tensor finite_difference_gradient(const ScalarFunction& f, const Tensor& theta,
                                  const GradCheckConfig& cfg = {});

/// Block-wise relative error: max|a - b| / max(max|a|, max|b|, floor).
/// Below the floor the measure degrades to an absolute error, so two
/// gradients that are both numerically zero compare equal.
double relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-8);

struct GradCheckResult {
  std::string block;
  double max_relative_error = 0.0;
  std::size_t parameters = 0;
  bool passed = false;
};

/// Compares an analytic gradient against the oracle for one parameter block.
GradCheckResult check_gradient(const std::string& block, const ScalarFunction& f,
                               const Tensor& theta, const Tensor& analytic,
                               const GradCheckConfig& cfg = {});

}  // namespace asymoe
