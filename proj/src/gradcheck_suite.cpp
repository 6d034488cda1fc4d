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


#include "asymoe/gradcheck_suite.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <utility>

#include "asymoe/adapter.hpp"
#include "asymoe/classifier.hpp"
#include "asymoe/encoder.hpp"
#include "asymoe/errors.hpp"
#include "asymoe/forward_backward.hpp"
#include "asymoe/model.hpp"
#include "asymoe/objectives.hpp"

namespace asymoe {
namespace {

Tensor random(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

double inner(const Tensor& a, const Tensor& b) { return dot(a.values(), b.values()); }

class Harness {
 public:
  explicit Harness(const GradCheckSuiteConfig& cfg) : cfg_(cfg) {}

  /// Perturbs `slot` in place; `loss` must read it through the enclosing state.
  template <typename Loss>
  void check(const std::string& block, Tensor& slot, Loss&& loss, Tensor analytic) {
    if (cfg_.fault) cfg_.fault(block, analytic);
    const ScalarFunction f = [&](const Tensor& theta) {
      const Tensor saved = std::exchange(slot, theta);
      const double v = loss();
      slot = saved;
      return v;
    };
    record(check_gradient(block, f, slot, analytic, cfg_.check));
  }

  void check_fn(const std::string& block, const ScalarFunction& f, const Tensor& theta,
                Tensor analytic) {
    if (cfg_.fault) cfg_.fault(block, analytic);
    record(check_gradient(block, f, theta, analytic, cfg_.check));
  }

  GradCheckReport report() && {
    GradCheckReport r;
    r.tolerance = cfg_.check.tolerance;
    for (const std::string& name : order_) r.blocks.push_back(blocks_.at(name));
    return r;
  }

 private:
  void record(const GradCheckResult& g) {
    auto [it, fresh] = blocks_.try_emplace(g.block);
    if (fresh) {
      order_.push_back(g.block);
      it->second.block = g.block;
    }
    BlockReport& b = it->second;
    b.max_relative_error = std::max(b.max_relative_error, g.max_relative_error);
    b.parameters = std::max(b.parameters, g.parameters);
    b.instances += 1;
    b.passed = b.passed && g.passed;
  }

  const GradCheckSuiteConfig& cfg_;
  std::map<std::string, BlockReport> blocks_;
  std::vector<std::string> order_;
};

void randomize_adapter(AdapterParams& a, std::mt19937_64& rng) {
  for (Tensor& t : a.down) t = random(t.shape(), rng);
  for (Tensor& t : a.up) t = random(t.shape(), rng);
  a.router = random(a.router.shape(), rng);
}

void check_adapter(Harness& h, Orientation o, std::mt19937_64& rng) {
  const std::string prefix = "adapter/" + to_string(o) + "/";
  const std::size_t tokens = 3;
  AdapterParams p = AdapterParams::zeros({4, 2, 3}, o, 1.0);
  randomize_adapter(p, rng);
  Tensor z = random({tokens, 4}, rng);
  const Tensor r = random({tokens, 4}, rng);
  const Tensor s = random({tokens, 3}, rng);
  auto loss = [&] {
    const AdapterOutput out = forward(z, p);
    return inner(r, out.delta) + inner(s, out.gates);
  };
  const AdapterGrads g = adapter_backward(r, s, forward(z, p).cache, p);
  for (std::size_t k = 0; k < p.down.size(); ++k) h.check(prefix + "down", p.down[k], loss, g.down[k]);
  for (std::size_t k = 0; k < p.up.size(); ++k) h.check(prefix + "up", p.up[k], loss, g.up[k]);
  h.check(prefix + "router", p.router, loss, g.router);
  h.check(prefix + "input", z, loss, g.input);
}

void check_block(Harness& h, std::mt19937_64& rng) {
  Tensor x = random({3, 4}, rng);
  BlockParams bp{random({4, 4}, rng), random({1, 4}, rng)};
  const Tensor r = random({3, 4}, rng);
  auto loss = [&] { return inner(r, block_forward(x, bp).out); };
  const BlockGrads g = block_backward(r, x, block_forward(x, bp).cache, bp);
  h.check("encoder/block/weight", bp.weight, loss, g.weight);
  h.check("encoder/block/bias", bp.bias, loss, g.bias);
  h.check("encoder/block/input", x, loss, g.input);
}

void check_encoder(Harness& h, Branch branch, std::mt19937_64& rng) {
  EncoderConfig c;
  c.branch = branch;
  c.layers = 2;
  c.hidden = 4;
  c.tokens = 2;
  c.raw_width = 3;
  c.shared_dim = 2;
  EncoderState s = init_encoder(c, rng);
  attach_adapters(s, {4, 2, 2}, Orientation::OneDownManyUps, 0.5, rng);
  for (AdapterParams& a : s.adapters) randomize_adapter(a, rng);
  for (BlockParams& b : s.blocks) b.bias = random(b.bias.shape(), rng);
  const Tensor raw = random({c.tokens, c.raw_width}, rng);
  const Tensor r = random({c.shared_dim}, rng);
  AdapterUpstream up;
  for (std::size_t l = 0; l < c.layers; ++l) {
    up.delta.push_back(random({c.sequence_length(), c.hidden}, rng));
    up.gates.push_back(random({c.sequence_length(), 2}, rng));
  }
  auto loss = [&] {
    const Encoded e = encode(raw, s, true);
    double v = inner(r, e.output);
    for (std::size_t l = 0; l < c.layers; ++l)
      v += inner(up.delta[l], e.cache.adapters[l].delta) + inner(up.gates[l], e.cache.adapters[l].gates);
    return v;
  };
  EncoderGrads g = zero_grads(s, true);
  encode_backward(r, up, encode(raw, s, true).cache, s, g);

  const std::string prefix = "encoder/" + to_string(branch) + "/";
  h.check(prefix + "embedding", s.embedding, loss, g.embedding);
  if (branch == Branch::Image) h.check(prefix + "cls", s.cls, loss, g.cls);
  h.check(prefix + "projection", s.projection, loss, g.projection);
  for (std::size_t l = 0; l < c.layers; ++l) {
    h.check(prefix + "layer/weight", s.blocks[l].weight, loss, g.blocks[l].weight);
    h.check(prefix + "layer/bias", s.blocks[l].bias, loss, g.blocks[l].bias);
    AdapterParams& a = s.adapters[l];
    h.check(prefix + "adapter/down", a.down[0], loss, g.adapters[l].down[0]);
    for (std::size_t k = 0; k < a.up.size(); ++k)
      h.check(prefix + "adapter/up", a.up[k], loss, g.adapters[l].up[k]);
    h.check(prefix + "adapter/router", a.router, loss, g.adapters[l].router);
  }
}

void check_classifier(Harness& h, std::mt19937_64& rng) {
  ClassifierHead head;
  head.class_embeddings = random({3, 4}, rng);
  Tensor x = random({4}, rng);
  Tensor tau = random({1}, rng, 0.1, 1.0);
  head.tau = tau[0];
  const Tensor r = random({3}, rng);
  auto loss = [&] {
    head.tau = tau[0];
    return inner(r, class_logits(x.values(), head));
  };
  const ClassifierGrads g = classify_backward(x.values(), head, r.values());
  h.check("classifier/x", x, loss, Tensor(Shape{4}, g.x));
  h.check("classifier/embeddings", head.class_embeddings, loss, g.embeddings);
  h.check("classifier/tau", tau, loss, Tensor::vector({g.tau}));
}

void check_losses(Harness& h, std::mt19937_64& rng) {
  {
    Tensor logits = random({3, 4}, rng, -2.0, 2.0);
    std::uniform_int_distribution<std::size_t> pick(0, 3);
    const std::vector<std::size_t> labels = {pick(rng), pick(rng), pick(rng)};
    auto loss = [&] { return cross_entropy(softmax(logits, 1), labels); };
    h.check("losses/ce", logits, loss, cross_entropy_logit_grad(softmax(logits, 1), labels));
  }
  {
    const Tensor kappa = random({2}, rng, 0.0, 1.0);
    DeltaBatch deltas(2);
    for (auto& per_sample : deltas)
      for (int l = 0; l < 2; ++l) per_sample.push_back(random({2, 3}, rng));
    auto loss = [&] { return uaad_loss(kappa.values(), deltas); };
    const DeltaBatch g = uaad_backward(kappa.values(), deltas);
    for (std::size_t j = 0; j < deltas.size(); ++j)
      for (std::size_t l = 0; l < deltas[j].size(); ++l) h.check("losses/bias", deltas[j][l], loss, g[j][l]);
  }
  {
    // Two branches of gates: 1 layer, 2 samples, 2 tokens, 3 experts each.
    const std::size_t per = 2 * 2 * 3;
    Tensor flat(Shape{2 * per});
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t row = 0; row < 4; ++row) {
        const Tensor g = softmax(random({1, 3}, rng, -2.0, 2.0), 1);
        for (std::size_t k = 0; k < 3; ++k) flat[b * per + row * 3 + k] = g[k];
      }
    auto unpack = [&](const Tensor& theta) {
      std::vector<GateTensor> gates(2, GateTensor(1, 2, 2, 3));
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t s = 0; s < 2; ++s)
          for (std::size_t t = 0; t < 2; ++t)
            for (std::size_t k = 0; k < 3; ++k) gates[b].at(0, s, t, k) = theta[b * per + (s * 2 + t) * 3 + k];
      return gates;
    };
    const ScalarFunction f = [&](const Tensor& theta) { return load_balance_loss(unpack(theta)); };
    const std::vector<GateTensor> d = load_balance_backward(unpack(flat));
    Tensor analytic(Shape{2 * per});
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t t = 0; t < 2; ++t)
          for (std::size_t k = 0; k < 3; ++k) analytic[b * per + (s * 2 + t) * 3 + k] = d[b].at(0, s, t, k);
    h.check_fn("losses/bal", f, flat, analytic);
  }
}

void check_model(Harness& h, std::mt19937_64& rng) {
  ModelConfig c;
  c.layers = 1;
  c.hidden = 6;
  c.raw_width = 3;
  c.shared_dim = 3;
  c.image_tokens = 2;
  c.text_tokens = 2;
  c.experts = 2;
  c.rank = 3;
  c.alpha = 0.5;
  // A soft temperature keeps the softmax away from saturation.
  c.tau = 1.0;
  c.learn_tau = true;
  DualEncoder m = init_model(c, rng());
  for (AdapterParams& a : m.image.adapters) randomize_adapter(a, rng);
  for (AdapterParams& a : m.text.adapters) randomize_adapter(a, rng);
  std::vector<Tensor> prompts;
  for (int i = 0; i < 3; ++i) prompts.push_back(random({2, 3}, rng));
  const Tensor x0 = random({2, 3}, rng);
  const Tensor x1 = random({2, 3}, rng);
  const std::vector<const Tensor*> images = {&x0, &x1};
  std::uniform_int_distribution<std::size_t> pick(0, 2);
  const std::vector<std::size_t> labels = {pick(rng), pick(rng)};

  ObjectiveOptions opts;
  opts.backbone_grads = true;
  opts.fixed_kappa = evaluate_objective(m, prompts, images, labels, opts).loss.kappa;
  const ObjectiveResult r = evaluate_objective(m, prompts, images, labels, opts);
  ObjectiveOptions fwd = opts;
  fwd.compute_grads = false;
  auto loss = [&] { return evaluate_objective(m, prompts, images, labels, fwd).loss.total; };

  for (auto [name, state, grads] : {std::tuple{"image", &m.image, &r.grads.image},
                                    std::tuple{"text", &m.text, &r.grads.text}}) {
    const std::string prefix = std::string("model/") + name + "/";
    AdapterParams& a = state->adapters[0];
    h.check(prefix + "adapter/down", a.down[0], loss, grads->adapters[0].down[0]);
    for (std::size_t k = 0; k < a.up.size(); ++k)
      h.check(prefix + "adapter/up", a.up[k], loss, grads->adapters[0].up[k]);
    h.check(prefix + "adapter/router", a.router, loss, grads->adapters[0].router);
    h.check(prefix + "embedding", state->embedding, loss, grads->embedding);
    h.check(prefix + "projection", state->projection, loss, grads->projection);
  }
  Tensor tau = Tensor::vector({m.head.tau});
  auto tau_loss = [&] {
    m.head.tau = tau[0];
    return loss();
  };
  h.check("model/tau", tau, tau_loss, Tensor::vector({r.grads.tau}));
  m.head.tau = tau[0];
}

}  // namespace

std::string to_string(GradCheckScope s) {
  switch (s) {
    case GradCheckScope::Adapter: return "adapter";
    case GradCheckScope::Encoder: return "encoder";
    case GradCheckScope::Losses: return "losses";
    case GradCheckScope::All: return "all";
  }
  return "all";
}

GradCheckScope gradcheck_scope_from_string(const std::string& s) {
  for (GradCheckScope g : {GradCheckScope::Adapter, GradCheckScope::Encoder, GradCheckScope::Losses,
                           GradCheckScope::All})
    if (to_string(g) == s) return g;
  throw UsageError("unknown gradcheck scope '" + s + "' (adapter, encoder, losses, all)");
}

bool GradCheckReport::passed() const {
  return std::all_of(blocks.begin(), blocks.end(), [](const BlockReport& b) { return b.passed; });
}

std::vector<std::string> GradCheckReport::failed_blocks() const {
  std::vector<std::string> out;
  for (const BlockReport& b : blocks)
    if (!b.passed) out.push_back(b.block);
  return out;
}

void to_json(nlohmann::json& j, const GradCheckReport& r) {
  j = {{"passed", r.passed()}, {"tolerance", r.tolerance}, {"blocks", nlohmann::json::array()}};
  for (const BlockReport& b : r.blocks)
    j["blocks"].push_back({{"block", b.block},
                           {"max_relative_error", b.max_relative_error},
                           {"parameters", b.parameters},
                           {"instances", b.instances},
                           {"passed", b.passed}});
}

GradCheckReport run_gradcheck(const GradCheckSuiteConfig& config) {
  config.check.validate();
  if (config.instances == 0) throw ConfigError("gradcheck: instances must be >= 1");
  Harness h(config);
  const GradCheckScope s = config.scope;
  const bool all = s == GradCheckScope::All;
  for (std::size_t i = 0; i < config.instances; ++i) {
    std::seed_seq seq{config.seed, static_cast<std::uint64_t>(i)};
    std::mt19937_64 rng(seq);
    if (all || s == GradCheckScope::Adapter) {
      check_adapter(h, Orientation::OneDownManyUps, rng);
      check_adapter(h, Orientation::ManyDownsOneUp, rng);
    }
    if (all || s == GradCheckScope::Encoder) {
      check_block(h, rng);
      check_encoder(h, Branch::Image, rng);
      check_encoder(h, Branch::Text, rng);
      check_classifier(h, rng);
    }
    if (all || s == GradCheckScope::Losses) check_losses(h, rng);
    if (all) check_model(h, rng);
  }
  return std::move(h).report();
}

}  // namespace asymoe
