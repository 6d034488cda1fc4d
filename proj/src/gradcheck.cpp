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

#include "asymoe/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "asymoe/errors.hpp"

namespace asymoe {

void GradCheckConfig::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("GradCheckConfig: epsilon must be > 0");
  if (!(tolerance > 0.0)) throw ConfigError("GradCheckConfig: tolerance must be > 0");
}

Tensor finite_difference_gradient(const ScalarFunction& f, const Tensor& theta,
                                  const GradCheckConfig& cfg) {
  cfg.validate();
  Tensor grad(theta.shape());
  Tensor probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double x = theta[i];
    probe[i] = x + cfg.epsilon;
    const double up = f(probe);
    probe[i] = x - cfg.epsilon;
    const double down = f(probe);
    probe[i] = x;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_difference_gradient: non-finite function value at coordinate " +
                         std::to_string(i));
    grad[i] = (up - down) / (2.0 * cfg.epsilon);
  }
  return grad;
}

double relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
  if (analytic.shape() != numeric.shape())
    throw DimensionError("relative_error: shape " + shape_to_string(analytic.shape()) + " vs " +
                         shape_to_string(numeric.shape()));
  double diff = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
  const double scale = std::max({max_abs(analytic), max_abs(numeric), floor});
  return diff / scale;
}

GradCheckResult check_gradient(const std::string& block, const ScalarFunction& f,
                               const Tensor& theta, const Tensor& analytic,
                               const GradCheckConfig& cfg) {
  const Tensor numeric = finite_difference_gradient(f, theta, cfg);
  GradCheckResult r;
  r.block = block;
  r.parameters = theta.size();
  r.max_relative_error = relative_error(analytic, numeric);
  r.passed = r.max_relative_error <= cfg.tolerance;
  return r;
}

}  // namespace asymoe
