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

#include "asymoe/datagen.hpp"

#include <algorithm>

#include <array>
#include <cmath>
#include <random>

#include "asymoe/errors.hpp"
#include "asymoe/io.hpp"

namespace asymoe {
namespace {

constexpr std::uint64_t kCentroidTag = 0x63656e74;
constexpr std::uint64_t kTemplateTag = 0x74706c74;
constexpr std::uint64_t kSplitTag = 0x73706c74;
constexpr std::uint64_t kShiftTag = 0x73686674;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  std::seed_seq seq{seed, tag, index};
  return std::mt19937_64(seq);
}

std::vector<double> gaussian(std::size_t n, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = scale * dist(rng);
  return v;
}

void normalize(std::vector<double>& v, double length) {
  const double n = l2_norm(v);
  for (double& x : v) x *= length / n;
}

std::vector<double> centroid(const SyntheticTaskConfig& c, std::size_t cls) {
  auto rng = stream(c.seed, kCentroidTag, cls);
  std::vector<double> v = gaussian(c.token_width, 1.0, rng);
  normalize(v, c.class_separation);
  return v;
}

Split draw_split(const SyntheticTaskConfig& c, const std::vector<std::vector<double>>& centroids,
                 const std::vector<std::size_t>& classes, std::size_t per_class,
                 std::uint64_t split_index, std::uint64_t& next_id) {
  auto rng = stream(c.seed, kSplitTag, split_index);
  std::normal_distribution<double> noise(0.0, 1.0);
  Split out;
  for (std::size_t cls : classes) {
    for (std::size_t i = 0; i < per_class; ++i) {
      Sample s;
      s.id = next_id++;
      s.label = cls;
      s.tokens = Tensor(Shape{c.tokens_per_sample, c.token_width});
      for (std::size_t t = 0; t < c.tokens_per_sample; ++t)
        for (std::size_t d = 0; d < c.token_width; ++d)
          s.tokens(t, d) = centroids[cls][d] + c.noise_scale * noise(rng);
      out.push_back(std::move(s));
    }
  }
  return out;
}

void apply_shift(const SyntheticTaskConfig& c, Tensor& tokens) {
  auto rng = stream(c.seed, kShiftTag, 0);
  if (c.ood_kind == ShiftKind::Additive) {
    std::vector<double> u = gaussian(c.token_width, 1.0, rng);
    normalize(u, c.ood_shift);
    for (std::size_t t = 0; t < tokens.rows(); ++t)
      for (std::size_t d = 0; d < tokens.cols(); ++d) tokens(t, d) += u[d];
    return;
  }
  std::vector<double> e1 = gaussian(c.token_width, 1.0, rng);
  std::vector<double> e2 = gaussian(c.token_width, 1.0, rng);
  normalize(e1, 1.0);
  const double proj = dot(e1, e2);
  for (std::size_t d = 0; d < e2.size(); ++d) e2[d] -= proj * e1[d];
  normalize(e2, 1.0);
  const double cs = std::cos(c.ood_shift), sn = std::sin(c.ood_shift);
  for (std::size_t t = 0; t < tokens.rows(); ++t) {
    auto row = tokens.row(t);
    const double a = dot(row, e1), b = dot(row, e2);
    const double ra = a * cs - b * sn, rb = a * sn + b * cs;
    for (std::size_t d = 0; d < row.size(); ++d) row[d] += (ra - a) * e1[d] + (rb - b) * e2[d];
  }
}

const char* kSplitNames[] = {"base_train", "base_test", "novel_test", "ood_test"};

std::array<Split*, 4> splits(Dataset& d) {
  return {&d.base_train, &d.base_test, &d.novel_test, &d.ood_test};
}

std::array<const Split*, 4> splits(const Dataset& d) {
  return {&d.base_train, &d.base_test, &d.novel_test, &d.ood_test};
}

}  // namespace

std::size_t SyntheticTaskConfig::base_class_count() const {
  return static_cast<std::size_t>(std::lround(base_fraction * static_cast<double>(num_classes)));
}

void SyntheticTaskConfig::validate() const {
  if (num_classes < 2) throw ConfigError("task: num_classes must be >= 2");
  if (!(base_fraction > 0.0 && base_fraction < 1.0))
    throw ConfigError("task: base_fraction must lie in (0, 1)");
  if (!(noise_scale >= 0.0)) throw ConfigError("task: noise_scale must be >= 0");
  if (!(ood_shift >= 0.0)) throw ConfigError("task: ood_shift must be >= 0");
  if (!(class_separation > 0.0)) throw ConfigError("task: class_separation must be > 0");
  if (tokens_per_sample < 1 || prompt_tokens < 2 || token_width < 1)
    throw ConfigError("task: token counts and width must be positive (prompt_tokens >= 2)");
  if (ood_kind == ShiftKind::Rotational && token_width < 2)
    throw ConfigError("task: rotational shift needs token_width >= 2");
  const std::size_t base = base_class_count();
  if (base == 0 || base == num_classes)
    throw ConfigError("task: base_fraction " + std::to_string(base_fraction) + " leaves " +
                      (base == 0 ? std::string("no base") : std::string("no novel")) +
                      " classes");
  if (train_per_class < 1 || test_per_class < 1)
    throw ConfigError("task: per-class sample counts must be >= 1");
}

void to_json(nlohmann::json& j, const SyntheticTaskConfig& c) {
  j = {{"num_classes", c.num_classes},
       {"tokens_per_sample", c.tokens_per_sample},
       {"prompt_tokens", c.prompt_tokens},
       {"token_width", c.token_width},
       {"class_separation", c.class_separation},
       {"noise_scale", c.noise_scale},
       {"ood_shift", c.ood_shift},
       {"ood_kind", c.ood_kind == ShiftKind::Additive ? "additive" : "rotational"},
       {"base_fraction", c.base_fraction},
       {"train_per_class", c.train_per_class},
       {"test_per_class", c.test_per_class},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SyntheticTaskConfig& c) {
  io::require_known_keys(j,
                         {"num_classes", "tokens_per_sample", "prompt_tokens", "token_width",
                          "class_separation", "noise_scale", "ood_shift", "ood_kind",
                          "base_fraction", "train_per_class", "test_per_class", "seed"},
                         "task config");
  c.num_classes = j.value("num_classes", c.num_classes);
  c.tokens_per_sample = j.value("tokens_per_sample", c.tokens_per_sample);
  c.prompt_tokens = j.value("prompt_tokens", c.prompt_tokens);
  c.token_width = j.value("token_width", c.token_width);
  c.class_separation = j.value("class_separation", c.class_separation);
  c.noise_scale = j.value("noise_scale", c.noise_scale);
  c.ood_shift = j.value("ood_shift", c.ood_shift);
  if (j.contains("ood_kind")) {
    const auto kind = j.at("ood_kind").get<std::string>();
    if (kind == "additive") c.ood_kind = ShiftKind::Additive;
    else if (kind == "rotational") c.ood_kind = ShiftKind::Rotational;
    else throw ConfigError("task: unknown ood_kind '" + kind + "'");
  }
  c.base_fraction = j.value("base_fraction", c.base_fraction);
  c.train_per_class = j.value("train_per_class", c.train_per_class);
  c.test_per_class = j.value("test_per_class", c.test_per_class);
  c.seed = j.value("seed", c.seed);
}

bool operator==(const Sample& a, const Sample& b) {
  return a.id == b.id && a.label == b.label && a.tokens == b.tokens;
}

bool operator==(const Dataset& a, const Dataset& b) {
  return nlohmann::json(a.config) == nlohmann::json(b.config) &&
         a.base_classes == b.base_classes && a.novel_classes == b.novel_classes &&
         a.prompts == b.prompts && a.base_train == b.base_train && a.base_test == b.base_test &&
         a.novel_test == b.novel_test && a.ood_test == b.ood_test;
}

Dataset generate(const SyntheticTaskConfig& config) {
  config.validate();
  Dataset d;
  d.config = config;
  const std::size_t base = config.base_class_count();
  for (std::size_t c = 0; c < config.num_classes; ++c)
    (c < base ? d.base_classes : d.novel_classes).push_back(c);

  std::vector<std::vector<double>> centroids;
  for (std::size_t c = 0; c < config.num_classes; ++c) centroids.push_back(centroid(config, c));

  auto template_rng = stream(config.seed, kTemplateTag, 0);
  const Tensor offsets(Shape{config.prompt_tokens, config.token_width},
                       gaussian(config.prompt_tokens * config.token_width, 0.1, template_rng));
  std::vector<double> end_token = gaussian(config.token_width, 1.0, template_rng);
  normalize(end_token, config.class_separation);
  for (std::size_t c = 0; c < config.num_classes; ++c) {
    Tensor p(Shape{config.prompt_tokens, config.token_width});
    for (std::size_t t = 0; t + 1 < config.prompt_tokens; ++t)
      for (std::size_t k = 0; k < config.token_width; ++k)
        p(t, k) = centroids[c][k] + offsets(t, k);
    for (std::size_t k = 0; k < config.token_width; ++k)
      p(config.prompt_tokens - 1, k) = end_token[k] + offsets(config.prompt_tokens - 1, k);
    d.prompts.push_back(std::move(p));
  }

  std::uint64_t next_id = 0;
  d.base_train = draw_split(config, centroids, d.base_classes, config.train_per_class, 0, next_id);
  d.base_test = draw_split(config, centroids, d.base_classes, config.test_per_class, 1, next_id);
  d.novel_test = draw_split(config, centroids, d.novel_classes, config.test_per_class, 2, next_id);
  d.ood_test = d.base_test;
  for (Sample& s : d.ood_test) {
    s.id = next_id++;
    apply_shift(config, s.tokens);
  }
  return d;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset) {
  io::Container c;
  c.meta["kind"] = "dataset";
  c.meta["config"] = dataset.config;
  c.meta["base_classes"] = dataset.base_classes;
  c.meta["novel_classes"] = dataset.novel_classes;

  const std::size_t width = dataset.config.token_width;
  const std::size_t n_prompt = dataset.config.prompt_tokens;
  std::vector<double> prompt_values;
  for (const auto& p : dataset.prompts)
    prompt_values.insert(prompt_values.end(), p.values().begin(), p.values().end());
  c.tensors.push_back({"prompts", Tensor(Shape{dataset.prompts.size(), n_prompt, width},
                                         std::move(prompt_values))});

  const auto all = splits(dataset);
  for (std::size_t i = 0; i < all.size(); ++i) {
    const Split& split = *all[i];
    nlohmann::json ids = nlohmann::json::array(), labels = nlohmann::json::array();
    std::vector<double> values;
    for (const Sample& s : split) {
      ids.push_back(s.id);
      labels.push_back(s.label);
      values.insert(values.end(), s.tokens.values().begin(), s.tokens.values().end());
    }
    c.meta["splits"][kSplitNames[i]] = {{"ids", ids}, {"labels", labels}};
    c.tensors.push_back(
        {std::string("split/") + kSplitNames[i],
         Tensor(Shape{split.size(), dataset.config.tokens_per_sample, width}, std::move(values))});
  }
  return io::encode(c, io::kDatasetMagic, io::Precision::F64);
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  const io::Container c = io::decode(bytes, io::kDatasetMagic);
  Dataset d;
  try {
    d.config = c.meta.at("config").get<SyntheticTaskConfig>();
    d.base_classes = c.meta.at("base_classes").get<std::vector<std::size_t>>();
    d.novel_classes = c.meta.at("novel_classes").get<std::vector<std::size_t>>();

    const Tensor& prompts = c.get("prompts");
    if (prompts.rank() != 3) throw ParseError("dataset: prompts must be rank 3", 0);
    const std::size_t per_prompt = prompts.dim(1) * prompts.dim(2);
    for (std::size_t i = 0; i < prompts.dim(0); ++i) {
      auto first = prompts.values().begin() + static_cast<std::ptrdiff_t>(i * per_prompt);
      d.prompts.emplace_back(Shape{prompts.dim(1), prompts.dim(2)},
                             std::vector<double>(first, first + static_cast<std::ptrdiff_t>(per_prompt)));
    }

    const auto all = splits(d);
    for (std::size_t i = 0; i < all.size(); ++i) {
      const auto& meta = c.meta.at("splits").at(kSplitNames[i]);
      const auto ids = meta.at("ids").get<std::vector<std::uint64_t>>();
      const auto labels = meta.at("labels").get<std::vector<std::size_t>>();
      const Tensor& values = c.get(std::string("split/") + kSplitNames[i]);
      if (values.rank() != 3 || values.dim(0) != ids.size() || labels.size() != ids.size())
        throw ParseError(std::string("dataset: split '") + kSplitNames[i] + "' is inconsistent", 0);
      const std::size_t per_sample = values.dim(1) * values.dim(2);
      for (std::size_t s = 0; s < ids.size(); ++s) {
        auto first = values.values().begin() + static_cast<std::ptrdiff_t>(s * per_sample);
        all[i]->push_back(
            {ids[s], labels[s],
             Tensor(Shape{values.dim(1), values.dim(2)},
                    std::vector<double>(first, first + static_cast<std::ptrdiff_t>(per_sample)))});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("dataset manifest: ") + e.what(), 16);
  }
  return d;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  io::write_file(path, encode_dataset(dataset));
}

Dataset read_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path));
}

}  // namespace asymoe
