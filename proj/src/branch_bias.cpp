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


#include "asymoe/branch_bias.hpp"

#include <cmath>
#include <sstream>

#include "asymoe/errors.hpp"
#include "asymoe/objectives.hpp"

namespace asymoe {

std::string to_string(DivergenceKind k) { return k == DivergenceKind::KL ? "kl" : "tv"; }

DivergenceKind divergence_kind_from_string(const std::string& s) {
  if (s == "kl") return DivergenceKind::KL;
  if (s == "tv") return DivergenceKind::TotalVariation;
  throw UsageError("unknown divergence '" + s + "' (kl, tv)");
}

BranchContributions branch_contributions(const DualEncoder& model, const std::vector<Tensor>& prompts,
                                         std::span<const Tensor* const> images,
                                         std::span<const std::size_t> labels) {
  if (images.empty()) throw DegenerateInputError("branch_contributions: empty batch");
  if (images.size() != labels.size()) throw DimensionError("branch_contributions: images vs labels");
  ClassifierHead head = model.head;
  head.class_embeddings = encode_class_embeddings(model, prompts);

  BranchContributions out;
  out.samples = images.size();
  const double inv = 1.0 / static_cast<double>(images.size());
  for (std::size_t j = 0; j < images.size(); ++j) {
    const Encoded e = encode(*images[j], model.image, true);
    const Tensor p = classify(e.output.values(), head);
    const std::size_t y = labels[j];
    const Tensor probs(Shape{1, p.size()}, std::vector<double>(p.values().begin(), p.values().end()));
    const Tensor d_logits = cross_entropy_logit_grad(probs, std::span<const std::size_t>(&y, 1));
    const ClassifierGrads g = classify_backward(e.output.values(), head, d_logits.row(0));
    out.c_v += l2_norm(std::span<const double>(g.x)) * inv;
    out.c_t += l2_norm(g.embeddings.row(y)) * inv;
  }
  return out;
}

double branch_bias(double c_v, double c_t, DivergenceKind kind) {
  if (!(c_v >= 0.0) || !(c_t >= 0.0) || !std::isfinite(c_v) || !std::isfinite(c_t))
    throw NumericError("branch_bias: contributions must be finite and nonnegative");
  const double total = c_v + c_t;
  if (total == 0.0) throw DegenerateInputError("branch_bias: undefined when both contributions are zero");
  const double p[2] = {c_v / total, c_t / total};
  double d = 0.0;
  for (double pi : p) {
    if (kind == DivergenceKind::KL) {
      if (pi > 0.0) d += pi * std::log(2.0 * pi);
    } else {
      d += 0.5 * std::abs(pi - 0.5);
    }
  }
  return std::max(d, 0.0);
}

void to_json(nlohmann::json& j, const BranchBiasReport& r) {
  j = {{"c_v", r.c_v},
       {"c_t", r.c_t},
       {"p_t", {r.p_v, r.p_t}},
       {"divergence", r.divergence},
       {"divergence_kind", to_string(r.kind)},
       {"samples_used", r.samples_used}};
}

BranchBiasReport branch_bias_report(const DualEncoder& model, const std::vector<Tensor>& prompts,
                                    std::span<const Tensor* const> images,
                                    std::span<const std::size_t> labels, DivergenceKind kind) {
  const BranchContributions c = branch_contributions(model, prompts, images, labels);
  BranchBiasReport r;
  r.c_v = c.c_v;
  r.c_t = c.c_t;
  r.kind = kind;
  r.samples_used = c.samples;
  r.divergence = branch_bias(c.c_v, c.c_t, kind);
  r.p_v = c.c_v / (c.c_v + c.c_t);
  r.p_t = c.c_t / (c.c_v + c.c_t);
  return r;
}

void to_json(nlohmann::json& j, const SuppressionReport& r) {
  j = {{"lambda_with", r.lambda_with},
       {"lambda_without", r.lambda_without},
       {"with_uaad", r.with_uaad},
       {"without_uaad", r.without_uaad},
       {"c_v_eff_with", r.with_uaad.c_v},
       {"c_v_eff_without", r.without_uaad.c_v},
       {"inequality_holds", r.inequality_holds}};
}

SuppressionReport suppression_report(const DualEncoder& with_uaad, const nlohmann::json& with_config,
                                     const DualEncoder& without_uaad,
                                     const nlohmann::json& without_config,
                                     const std::vector<Tensor>& prompts,
                                     std::span<const Tensor* const> images,
                                     std::span<const std::size_t> labels, DivergenceKind kind) {
  nlohmann::json a = with_config;
  nlohmann::json b = without_config;
  SuppressionReport r;
  try {
    r.lambda_with = a.at("weights").at("lambda_bias").get<double>();
    r.lambda_without = b.at("weights").at("lambda_bias").get<double>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("suppression_report: configs lack weights.lambda_bias");
  }
  a["weights"].erase("lambda_bias");
  b["weights"].erase("lambda_bias");
  if (a != b) throw ConfigError("suppression_report: configs differ beyond lambda_bias");
  r.with_uaad = branch_bias_report(with_uaad, prompts, images, labels, kind);
  r.without_uaad = branch_bias_report(without_uaad, prompts, images, labels, kind);
  r.inequality_holds = r.with_uaad.c_v <= r.without_uaad.c_v;
  return r;
}

std::string bias_csv_header() { return "seed,lambda_bias,c_v_eff,c_t_eff,bias"; }

std::string bias_csv_row(std::uint64_t seed, double lambda_bias, const BranchBiasReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << seed << ',' << lambda_bias << ',' << r.c_v << ',' << r.c_t << ',' << r.divergence;
  return os.str();
}

}  // namespace asymoe
