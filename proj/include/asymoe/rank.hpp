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
#include <vector>

#include "asymoe/adapter.hpp"

namespace asymoe {

/// Relative singular-value cutoff used by output_span_rank.
inline constexpr double kRankThreshold = 1e-8;

/// Numerical rank of the matrix whose rows are the adapter outputs for each
/// probe row of `probes` (each probe is evaluated as a one-token input).
/// Singular values above threshold·σ_max count; an all-zero matrix has rank 0.
/// Requires at least d_h probes.
std::size_t output_span_rank(const AdapterParams& params, const Tensor& probes,
                             double threshold = kRankThreshold);

/// Singular values of a matrix, descending.
std::vector<double> singular_values(const Tensor& m);

struct RankComparison {
  std::size_t one_down_many_ups = 0;
  std::size_t many_downs_one_up = 0;
};

/// Settings for one seeded trial of the orientation rank experiment.
struct RankTrialConfig {
  AdapterShape shape{16, 2, 3};
  std::size_t probes = 32;
  /// Router weights are drawn from U(±gain/√d_h); a larger gain spreads the
  /// gates so different probes favour different experts.
  double router_gain = 4.0;
  /// Zero every up-projection instead of drawing it.
  bool zero_up = false;
};

/// Draws matched random weights for both orientations (same router, same
/// probes, every matrix full rank with probability one) and reports both ranks.
RankComparison compare_orientation_ranks(const RankTrialConfig& cfg, std::uint64_t seed);

}  // namespace asymoe
