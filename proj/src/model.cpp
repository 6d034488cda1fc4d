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

#include "asymoe/model.hpp"

#include <random>

#include "asymoe/errors.hpp"

namespace asymoe {

EncoderConfig ModelConfig::encoder(Branch branch) const {
  EncoderConfig c;
  c.branch = branch;
  c.layers = layers;
  c.hidden = hidden;
  c.tokens = branch == Branch::Image ? image_tokens : text_tokens;
  c.raw_width = raw_width;
  c.shared_dim = shared_dim;
  return c;
}

void ModelConfig::validate() const {
  encoder(Branch::Image).validate();
  encoder(Branch::Text).validate();
  adapter_shape().validate();
  if (!(alpha >= 0.0)) throw ConfigError("model: alpha must be >= 0");
  if (!(tau > 0.0)) throw ConfigError("model: tau must be > 0");
}

DualEncoder init_model(const ModelConfig& config, std::uint64_t adapter_seed) {
  config.validate();
  DualEncoder m;
  m.config = config;
  {
    std::mt19937_64 image_rng(config.backbone_seed);
    std::mt19937_64 text_rng(config.backbone_seed);
    m.image = init_encoder(config.encoder(Branch::Image), image_rng);
    m.text = init_encoder(config.encoder(Branch::Text), text_rng);
  }
  std::seed_seq seq{adapter_seed, std::uint64_t{0x61646170}};
  std::mt19937_64 rng(seq);
  if (config.image_adapters)
    attach_adapters(m.image, config.adapter_shape(), config.orientation, config.alpha, rng);
  if (config.text_adapters)
    attach_adapters(m.text, config.adapter_shape(), config.orientation, config.alpha, rng);
  m.head.tau = config.tau;
  m.head.learn_tau = config.learn_tau;
  return m;
}

Tensor encode_class_embeddings(const DualEncoder& model, const std::vector<Tensor>& prompts,
                               bool adapters_enabled) {
  Tensor out(Shape{prompts.size(), model.config.shared_dim});
  for (std::size_t c = 0; c < prompts.size(); ++c) {
    const Encoded e = encode(prompts[c], model.text, adapters_enabled);
    std::copy(e.output.values().begin(), e.output.values().end(), out.row(c).begin());
  }
  return out;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"layers", c.layers},
       {"hidden", c.hidden},
       {"raw_width", c.raw_width},
       {"shared_dim", c.shared_dim},
       {"image_tokens", c.image_tokens},
       {"text_tokens", c.text_tokens},
       {"experts", c.experts},
       {"rank", c.rank},
       {"alpha", c.alpha},
       {"orientation", to_string(c.orientation)},
       {"image_adapters", c.image_adapters},
       {"text_adapters", c.text_adapters},
       {"tau", c.tau},
       {"learn_tau", c.learn_tau},
       {"backbone_seed", c.backbone_seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  io::require_known_keys(j,
                         {"layers", "hidden", "raw_width", "shared_dim", "image_tokens",
                          "text_tokens", "experts", "rank", "alpha", "orientation",
                          "image_adapters", "text_adapters", "tau", "learn_tau", "backbone_seed"},
                         "model config");
  c.layers = j.value("layers", c.layers);
  c.hidden = j.value("hidden", c.hidden);
  c.raw_width = j.value("raw_width", c.raw_width);
  c.shared_dim = j.value("shared_dim", c.shared_dim);
  c.image_tokens = j.value("image_tokens", c.image_tokens);
  c.text_tokens = j.value("text_tokens", c.text_tokens);
  c.experts = j.value("experts", c.experts);
  c.rank = j.value("rank", c.rank);
  c.alpha = j.value("alpha", c.alpha);
  if (j.contains("orientation"))
    c.orientation = orientation_from_string(j.at("orientation").get<std::string>());
  c.image_adapters = j.value("image_adapters", c.image_adapters);
  c.text_adapters = j.value("text_adapters", c.text_adapters);
  c.tau = j.value("tau", c.tau);
  c.learn_tau = j.value("learn_tau", c.learn_tau);
  c.backbone_seed = j.value("backbone_seed", c.backbone_seed);
}

namespace {

void add_encoder(io::Container& c, const std::string& prefix, const EncoderState& e) {
  c.tensors.push_back({prefix + "/embedding", e.embedding});
  if (!e.cls.empty()) c.tensors.push_back({prefix + "/cls", e.cls});
  for (std::size_t i = 0; i < e.blocks.size(); ++i) {
    const std::string b = prefix + "/block/" + std::to_string(i);
    c.tensors.push_back({b + "/weight", e.blocks[i].weight});
    c.tensors.push_back({b + "/bias", e.blocks[i].bias});
  }
  for (std::size_t i = 0; i < e.adapters.size(); ++i) {
    const AdapterParams& a = e.adapters[i];
    const std::string b = prefix + "/adapter/" + std::to_string(i);
    const nlohmann::json attrs = {{"orientation", to_string(a.orientation)}, {"alpha", a.alpha}};
    for (std::size_t k = 0; k < a.down.size(); ++k)
      c.tensors.push_back({b + "/down/" + std::to_string(k), a.down[k], attrs});
    for (std::size_t k = 0; k < a.up.size(); ++k)
      c.tensors.push_back({b + "/up/" + std::to_string(k), a.up[k], attrs});
    c.tensors.push_back({b + "/router", a.router, attrs});
  }
  c.tensors.push_back({prefix + "/projection", e.projection});
}

void read_encoder(const io::Container& c, const std::string& prefix, EncoderState& e) {
  e.embedding = c.get(prefix + "/embedding");
  if (e.config.branch == Branch::Image) e.cls = c.get(prefix + "/cls");
  for (std::size_t i = 0; i < e.blocks.size(); ++i) {
    const std::string b = prefix + "/block/" + std::to_string(i);
    e.blocks[i].weight = c.get(b + "/weight");
    e.blocks[i].bias = c.get(b + "/bias");
  }
  for (std::size_t i = 0; i < e.adapters.size(); ++i) {
    AdapterParams& a = e.adapters[i];
    const std::string b = prefix + "/adapter/" + std::to_string(i);
    for (std::size_t k = 0; k < a.down.size(); ++k) a.down[k] = c.get(b + "/down/" + std::to_string(k));
    for (std::size_t k = 0; k < a.up.size(); ++k) a.up[k] = c.get(b + "/up/" + std::to_string(k));
    a.router = c.get(b + "/router");
    if (const io::NamedTensor* t = c.find(b + "/router")) a.alpha = t->attrs.value("alpha", a.alpha);
  }
  e.projection = c.get(prefix + "/projection");
  e.validate();
}

}  // namespace

io::Container checkpoint_container(const DualEncoder& model) {
  io::Container c;
  c.meta["kind"] = "checkpoint";
  c.meta["model_config"] = model.config;
  c.meta["branches"] = {"image", "text"};
  c.meta["head"] = {{"tau", model.head.tau}, {"learn_tau", model.head.learn_tau}};
  c.meta["backbone_frozen"] = {{"image", model.image.backbone_frozen},
                               {"text", model.text.backbone_frozen}};
  add_encoder(c, "image", model.image);
  add_encoder(c, "text", model.text);
  if (!model.head.class_embeddings.empty())
    c.tensors.push_back({"head/class_embeddings", model.head.class_embeddings});
  return c;
}

void save_checkpoint(const DualEncoder& model, const std::filesystem::path& path,
                     io::Precision precision, const nlohmann::json& extra) {
  io::Container c = checkpoint_container(model);
  c.meta["extra"] = extra;
  io::write_file(path, io::encode(c, io::kCheckpointMagic, precision));
}

LoadedCheckpoint model_from_container(const io::Container& c) {
  LoadedCheckpoint out;
  try {
    const ModelConfig config = c.meta.at("model_config").get<ModelConfig>();
    // Structure from the config, values from the file.
    out.model = init_model(config, 0);
    out.model.head.tau = c.meta.at("head").at("tau").get<double>();
    out.model.head.learn_tau = c.meta.at("head").at("learn_tau").get<bool>();
    out.model.image.backbone_frozen = c.meta.at("backbone_frozen").at("image").get<bool>();
    out.model.text.backbone_frozen = c.meta.at("backbone_frozen").at("text").get<bool>();
    out.extra = c.meta.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint manifest: ") + e.what(), 16);
  }
  read_encoder(c, "image", out.model.image);
  read_encoder(c, "text", out.model.text);
  if (c.find("head/class_embeddings")) out.model.head.class_embeddings = c.get("head/class_embeddings");
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return model_from_container(io::decode(io::read_file(path), io::kCheckpointMagic));
}

}  // namespace asymoe
