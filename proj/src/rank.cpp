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

#include "asymoe/rank.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <random>

#include "asymoe/errors.hpp"

namespace asymoe {

std::vector<double> singular_values(const Tensor& m) {
  Eigen::MatrixXd a(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) a(i, j) = m(i, j);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  return std::vector<double>(s.data(), s.data() + s.size());
}

std::size_t output_span_rank(const AdapterParams& params, const Tensor& probes,
                             double threshold) {
  params.validate();
  if (probes.rank() != 2 || probes.cols() != params.hidden())
    throw DimensionError("output_span_rank: probes " + shape_to_string(probes.shape()));
  if (probes.rows() < params.hidden())
    throw UsageError("output_span_rank: need at least " + std::to_string(params.hidden()) +
                     " probes, got " + std::to_string(probes.rows()));

  Tensor deltas(Shape{probes.rows(), params.hidden()});
  for (std::size_t p = 0; p < probes.rows(); ++p) {
    Tensor z(Shape{1, params.hidden()});
    std::copy(probes.row(p).begin(), probes.row(p).end(), z.row(0).begin());
    const AdapterOutput out = forward(z, params);
    std::copy(out.delta.row(0).begin(), out.delta.row(0).end(), deltas.row(p).begin());
  }

  const std::vector<double> sv = singular_values(deltas);
  if (sv.empty() || sv.front() == 0.0) return 0;
  std::size_t rank = 0;
  for (double s : sv)
    if (s > threshold * sv.front()) ++rank;
  return rank;
}

RankComparison compare_orientation_ranks(const RankTrialConfig& cfg, std::uint64_t seed) {
  const AdapterShape& s = cfg.shape;
  s.validate();
  std::mt19937_64 rng(seed);
  const double down_bound = 1.0 / std::sqrt(static_cast<double>(s.hidden));
  const double up_bound = 1.0 / std::sqrt(static_cast<double>(s.rank));
  std::uniform_real_distribution<double> down_dist(-down_bound, down_bound);
  std::uniform_real_distribution<double> up_dist(-up_bound, up_bound);
  std::uniform_real_distribution<double> router_dist(-cfg.router_gain * down_bound,
                                                     cfg.router_gain * down_bound);
  auto draw = [&](Tensor& t, auto& dist) {
    for (double& v : t.values()) v = dist(rng);
  };

  AdapterParams standard = AdapterParams::zeros(s, Orientation::OneDownManyUps, 1.0);
  AdapterParams inverted = AdapterParams::zeros(s, Orientation::ManyDownsOneUp, 1.0);
  draw(standard.router, router_dist);
  inverted.router = standard.router;
  for (auto& d : standard.down) draw(d, down_dist);
  for (auto& u : standard.up) draw(u, up_dist);
  for (auto& d : inverted.down) draw(d, down_dist);
  for (auto& u : inverted.up) draw(u, up_dist);
  if (cfg.zero_up) {
    for (auto& u : standard.up) u.fill(0.0);
    for (auto& u : inverted.up) u.fill(0.0);
  }

  std::normal_distribution<double> probe_dist(0.0, 1.0);
  Tensor probes(Shape{cfg.probes, s.hidden});
  for (double& v : probes.values()) v = probe_dist(rng);

  return {output_span_rank(standard, probes), output_span_rank(inverted, probes)};
}

}  // namespace asymoe
