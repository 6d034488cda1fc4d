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

#include "asymoe/encoder.hpp"

#include <cmath>

#include "asymoe/errors.hpp"

namespace asymoe {
namespace {

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Tensor add_row_bias(Tensor m, const Tensor& bias) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
  return m;
}

}  // namespace

std::string to_string(Branch b) { return b == Branch::Image ? "image" : "text"; }

void EncoderConfig::validate() const {
  if (layers < 1) throw ConfigError("encoder: layers must be >= 1");
  if (tokens < 1) throw ConfigError("encoder: token count must be >= 1");
  if (hidden < 1 || raw_width < 1 || shared_dim < 1)
    throw ConfigError("encoder: widths must be >= 1");
  if (shared_dim > hidden) throw ConfigError("encoder: shared width must not exceed hidden width");
}

void EncoderState::validate() const {
  config.validate();
  const std::size_t dh = config.hidden;
  if (embedding.shape() != Shape{config.raw_width, dh})
    throw DimensionError("encoder: embedding " + shape_to_string(embedding.shape()));
  if (config.branch == Branch::Image && cls.shape() != Shape{1, dh})
    throw DimensionError("encoder: image branch needs a 1×d_h CLS token");
  if (blocks.size() != config.layers) throw DimensionError("encoder: block count");
  for (const auto& b : blocks)
    if (b.weight.shape() != Shape{dh, dh} || b.bias.shape() != Shape{1, dh})
      throw DimensionError("encoder: block shape");
  if (!adapters.empty()) {
    if (adapters.size() != config.layers)
      throw DimensionError("encoder: adapter count must equal layer count");
    for (const auto& a : adapters) {
      a.validate();
      if (a.hidden() != dh) throw DimensionError("encoder: adapter width");
    }
  }
  if (projection.shape() != Shape{dh, config.shared_dim})
    throw DimensionError("encoder: projection " + shape_to_string(projection.shape()));
}

EncoderState init_encoder(const EncoderConfig& config, std::mt19937_64& rng) {
  config.validate();
  EncoderState s;
  s.config = config;
  const double dh = static_cast<double>(config.hidden);
  s.embedding = uniform({config.raw_width, config.hidden},
                        1.0 / std::sqrt(static_cast<double>(config.raw_width)), rng);
  // Drawn for both branches so the two streams stay aligned when seeded alike.
  Tensor cls = uniform({1, config.hidden}, 1.0, rng);
  if (config.branch == Branch::Image) s.cls = std::move(cls);
  for (std::size_t i = 0; i < config.layers; ++i)
    s.blocks.push_back({uniform({config.hidden, config.hidden}, 1.0 / std::sqrt(dh), rng),
                        Tensor(Shape{1, config.hidden})});
  s.projection = uniform({config.hidden, config.shared_dim}, 1.0 / std::sqrt(dh), rng);
  return s;
}

void attach_adapters(EncoderState& state, const AdapterShape& shape, Orientation orientation,
                     double alpha, std::mt19937_64& rng) {
  if (shape.hidden != state.config.hidden)
    throw DimensionError("attach_adapters: adapter width differs from encoder width");
  state.adapters.clear();
  for (std::size_t i = 0; i < state.config.layers; ++i)
    state.adapters.push_back(init_adapter(shape, orientation, alpha, rng));
}

Tensor embed(const Tensor& raw, const EncoderState& state) {
  const EncoderConfig& c = state.config;
  if (raw.rank() != 2 || raw.rows() != c.tokens || raw.cols() != c.raw_width)
    throw DimensionError("embed: raw tokens " + shape_to_string(raw.shape()) + ", expected [" +
                         std::to_string(c.tokens) + "," + std::to_string(c.raw_width) + "]");
  const Tensor tokens = matmul(raw, state.embedding);
  if (c.branch == Branch::Text) return tokens;
  Tensor out(Shape{c.tokens + 1, c.hidden});
  std::copy(state.cls.values().begin(), state.cls.values().end(), out.row(0).begin());
  for (std::size_t r = 0; r < c.tokens; ++r)
    std::copy(tokens.row(r).begin(), tokens.row(r).end(), out.row(r + 1).begin());
  return out;
}

BlockOutput block_forward(const Tensor& h, const BlockParams& block) {
  BlockOutput o;
  o.cache.norm = layer_norm_rows(h);
  o.cache.mixed = o.cache.norm.out + broadcast_row_mean(o.cache.norm.out);
  o.cache.pre = add_row_bias(matmul(o.cache.mixed, block.weight), block.bias);
  o.out = h + relu(o.cache.pre);
  return o;
}

BlockGrads block_backward(const Tensor& grad_out, const Tensor& h, const BlockCache& cache,
                          const BlockParams& block) {
  (void)h;
  BlockGrads g;
  const Tensor d_pre = relu_backward(grad_out, cache.pre);
  g.weight = matmul_tn(cache.mixed, d_pre);
  g.bias = Tensor(Shape{1, d_pre.cols()});
  const Tensor sums = column_sums(d_pre);
  std::copy(sums.values().begin(), sums.values().end(), g.bias.values().begin());
  const Tensor d_mixed = matmul_nt(d_pre, block.weight);
  const Tensor d_norm = d_mixed + broadcast_row_mean(d_mixed);
  g.input = grad_out + layer_norm_rows_backward(d_norm, cache.norm);
  return g;
}

Encoded encode(const Tensor& raw, const EncoderState& state, bool adapters_enabled) {
  const bool run_adapters = adapters_enabled && state.has_adapters();
  Encoded e;
  EncodeCache& c = e.cache;
  c.raw = raw;
  c.adapters_enabled = run_adapters;
  c.hidden.push_back(embed(raw, state));
  for (std::size_t i = 0; i < state.config.layers; ++i) {
    const Tensor& h = c.hidden.back();
    BlockOutput b = block_forward(h, state.blocks[i]);
    Tensor next = std::move(b.out);
    if (run_adapters) {
      AdapterOutput a = forward(h, state.adapters[i]);
      next += a.delta * state.adapters[i].alpha;
      c.adapters.push_back(std::move(a));
    }
    c.blocks.push_back(std::move(b.cache));
    c.hidden.push_back(std::move(next));
  }
  const auto readout = c.hidden.back().row(state.config.readout_row());
  Tensor r(Shape{1, state.config.hidden}, std::vector<double>(readout.begin(), readout.end()));
  const Tensor projected = matmul(r, state.projection);
  e.output = Tensor(Shape{state.config.shared_dim},
                    std::vector<double>(projected.values().begin(), projected.values().end()));
  return e;
}

EncoderGrads zero_grads(const EncoderState& state, bool with_backbone) {
  EncoderGrads g;
  for (const auto& a : state.adapters) g.adapters.push_back(zeros_like(a));
  g.has_backbone = with_backbone;
  if (with_backbone) {
    g.embedding = Tensor(state.embedding.shape());
    g.cls = Tensor(state.cls.shape());
    for (const auto& b : state.blocks)
      g.blocks.push_back({Tensor(), Tensor(b.weight.shape()), Tensor(b.bias.shape())});
    g.projection = Tensor(state.projection.shape());
  }
  return g;
}

void encode_backward(const Tensor& grad_output, const AdapterUpstream& upstream,
                     const EncodeCache& cache, const EncoderState& state, EncoderGrads& grads) {
  const EncoderConfig& cfg = state.config;
  if (cache.hidden.size() != cfg.layers + 1)
    throw UsageError("encode_backward: forward cache is missing");
  if (grad_output.size() != cfg.shared_dim)
    throw DimensionError("encode_backward: output gradient " +
                         shape_to_string(grad_output.shape()));
  if (cache.adapters_enabled && grads.adapters.size() != cfg.layers)
    throw UsageError("encode_backward: gradient buffers lack adapter slots");

  const std::size_t readout = cfg.readout_row();
  const Tensor g_out(Shape{1, cfg.shared_dim},
                     std::vector<double>(grad_output.values().begin(), grad_output.values().end()));
  const Tensor d_readout = matmul_nt(g_out, state.projection);  // 1 × d_h
  if (grads.has_backbone) {
    const auto h = cache.hidden.back().row(readout);
    for (std::size_t i = 0; i < cfg.hidden; ++i)
      for (std::size_t j = 0; j < cfg.shared_dim; ++j)
        grads.projection(i, j) += h[i] * grad_output[j];
  }

  Tensor dh(cache.hidden.back().shape());
  std::copy(d_readout.values().begin(), d_readout.values().end(), dh.row(readout).begin());

  for (std::size_t li = cfg.layers; li-- > 0;) {
    const Tensor& h_prev = cache.hidden[li];
    BlockGrads bg = block_backward(dh, h_prev, cache.blocks[li], state.blocks[li]);
    Tensor d_prev = std::move(bg.input);
    if (grads.has_backbone) {
      grads.blocks[li].weight += bg.weight;
      grads.blocks[li].bias += bg.bias;
    }
    if (cache.adapters_enabled) {
      const AdapterParams& ap = state.adapters[li];
      Tensor d_delta = dh * ap.alpha;
      if (li < upstream.delta.size() && !upstream.delta[li].empty()) d_delta += upstream.delta[li];
      const Tensor no_gates;
      const Tensor& d_gates =
          li < upstream.gates.size() && !upstream.gates[li].empty() ? upstream.gates[li] : no_gates;
      AdapterGrads ag = adapter_backward(d_delta, d_gates, cache.adapters[li].cache, ap);
      accumulate(grads.adapters[li], ag);
      d_prev += ag.input;
    }
    dh = std::move(d_prev);
  }

  if (grads.has_backbone) {
    if (cfg.branch == Branch::Image) {
      for (std::size_t j = 0; j < cfg.hidden; ++j) grads.cls(0, j) += dh(0, j);
      Tensor d_tokens(Shape{cfg.tokens, cfg.hidden});
      for (std::size_t r = 0; r < cfg.tokens; ++r)
        std::copy(dh.row(r + 1).begin(), dh.row(r + 1).end(), d_tokens.row(r).begin());
      grads.embedding += matmul_tn(cache.raw, d_tokens);
    } else {
      grads.embedding += matmul_tn(cache.raw, dh);
    }
  }
}

}  // namespace asymoe
