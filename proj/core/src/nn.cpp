// Copyright 2026 The obsgen Authors
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

#include "obsgen/nn.hpp"

#include <cmath>
#include <numeric>

#include "obsgen/errors.hpp"

namespace obsgen {

void LayerConfig::validate() const {
  if (hidden == 0 || num_heads <= 0 || ffn == 0) {
    throw ConfigError("layer config: hidden, num_heads and ffn must be > 0");
  }
  if (hidden % static_cast<std::size_t>(num_heads) != 0) {
    throw ConfigError("layer config: hidden size " + std::to_string(hidden) +
                      " is not divisible by " + std::to_string(num_heads) +
                      " heads");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("layer config: dropout must lie in [0, 1)");
  }
}

Var ParameterRegistry::add(const std::string& name, Tensor init) {
  for (const auto& [existing, _] : entries_) {
    if (existing == name) {
      throw ConfigError("duplicate parameter name: " + name);
    }
  }
  Var v = Var::parameter(std::move(init));
  entries_.emplace_back(name, v);
  return v;
}

Var ParameterRegistry::find(const std::string& name) const {
  for (const auto& [n, v] : entries_) {
    if (n == name) return v;
  }
  throw ConfigError("unknown parameter: " + name);
}

std::size_t ParameterRegistry::parameter_count() const {
  std::size_t total = 0;
  for (const auto& [_, v] : entries_) total += v.value().size();
  return total;
}

void ParameterRegistry::zero_grad() {
  for (auto& [_, v] : entries_) v.zero_grad();
}

Tensor Initializer::projection(std::size_t fan_in, std::size_t fan_out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t({fan_in, fan_out});
  for (double& v : t.data()) v = dist(rng_);
  return t;
}

Tensor Initializer::embedding(std::size_t rows, std::size_t dim) {
  std::normal_distribution<double> dist(0.0, 0.02);
  Tensor t({rows, dim});
  for (double& v : t.data()) v = dist(rng_);
  return t;
}

Linear::Linear(ParameterRegistry& reg, Initializer& init,
               const std::string& name, std::size_t in, std::size_t out)
    : weight(reg.add(name + ".weight", init.projection(in, out))),
      bias(reg.add(name + ".bias", Tensor({1, out}))) {}

Var Linear::operator()(const Var& x) const {
  return add_row(matmul(x, weight), bias);
}

LayerNorm::LayerNorm(ParameterRegistry& reg, const std::string& name,
                     std::size_t dim)
    : gain(reg.add(name + ".gain", Tensor({1, dim}, 1.0))),
      bias(reg.add(name + ".bias", Tensor({1, dim}))) {}

Embedding::Embedding(ParameterRegistry& reg, Initializer& init,
                     const std::string& name, std::size_t rows,
                     std::size_t dim)
    : table(reg.add(name, init.embedding(rows, dim))) {}

Var Embedding::positions(std::size_t count) const {
  if (count > table.rows()) {
    throw VocabularyError("sequence length " + std::to_string(count) +
                          " exceeds " + std::to_string(table.rows()) +
                          " learned positions");
  }
  std::vector<int> ids(count);
  std::iota(ids.begin(), ids.end(), 0);
  return embedding(table, ids);
}

MultiHeadAttention::MultiHeadAttention(ParameterRegistry& reg,
                                       Initializer& init,
                                       const std::string& name,
                                       const LayerConfig& cfg)
    : q_proj(reg, init, name + ".q", cfg.hidden, cfg.hidden),
      k_proj(reg, init, name + ".k", cfg.hidden, cfg.hidden),
      v_proj(reg, init, name + ".v", cfg.hidden, cfg.hidden),
      out_proj(reg, init, name + ".out", cfg.hidden, cfg.hidden),
      num_heads(cfg.num_heads),
      label(name) {}

Var MultiHeadAttention::operator()(const Var& query, const Var& key,
                                   const Var& value, const AttentionMask& mask,
                                   const ForwardContext& ctx) const {
  std::vector<Tensor> weights;
  Var mixed = attention(q_proj(query), k_proj(key), v_proj(value), mask,
                        num_heads, ctx.trace ? &weights : nullptr);
  if (ctx.trace) ctx.trace->entries.push_back({label, std::move(weights)});
  return out_proj(mixed);
}

FeedForward::FeedForward(ParameterRegistry& reg, Initializer& init,
                         const std::string& name, const LayerConfig& cfg)
    : in(reg, init, name + ".in", cfg.hidden, cfg.ffn),
      out(reg, init, name + ".out", cfg.ffn, cfg.hidden),
      dropout(cfg.dropout) {}

Var FeedForward::operator()(const Var& x, const ForwardContext& ctx) const {
  return out(obsgen::dropout(relu(in(x)), dropout, ctx.dropout_rng()));
}

EncoderLayer::EncoderLayer(ParameterRegistry& reg, Initializer& init,
                           const std::string& name, const LayerConfig& cfg)
    : self_attn(reg, init, name + ".self_attn", cfg),
      norm1(reg, name + ".norm1", cfg.hidden),
      ffn(reg, init, name + ".ffn", cfg),
      norm2(reg, name + ".norm2", cfg.hidden),
      dropout(cfg.dropout) {}

Var EncoderLayer::operator()(const Var& x, const AttentionMask& mask,
                             const ForwardContext& ctx) const {
  auto* rng = ctx.dropout_rng();
  Var h = norm1(add(x, obsgen::dropout(self_attn(x, x, x, mask, ctx), dropout,
                                       rng)));
  return norm2(add(h, obsgen::dropout(ffn(h, ctx), dropout, rng)));
}

Encoder::Encoder(ParameterRegistry& reg, Initializer& init,
                 const std::string& name, const LayerConfig& cfg,
                 std::size_t num_layers) {
  for (std::size_t i = 0; i < num_layers; ++i) {
    layers.emplace_back(reg, init, name + ".layers." + std::to_string(i), cfg);
  }
}

Var Encoder::operator()(Var x, const AttentionMask& mask,
                        const ForwardContext& ctx) const {
  for (const auto& layer : layers) x = layer(x, mask, ctx);
  return x;
}

DecoderLayer::DecoderLayer(ParameterRegistry& reg, Initializer& init,
                           const std::string& name, const LayerConfig& cfg,
                           const std::vector<std::string>& memory_names)
    : self_attn(reg, init, name + ".self_attn", cfg),
      self_norm(reg, name + ".self_norm", cfg.hidden),
      dropout(cfg.dropout) {
  for (const auto& mem : memory_names) {
    cross_attn.emplace_back(reg, init, name + "." + mem + "_attn", cfg);
    cross_norm.emplace_back(reg, name + "." + mem + "_norm", cfg.hidden);
  }
  ffn = FeedForward(reg, init, name + ".ffn", cfg);
  ffn_norm = LayerNorm(reg, name + ".ffn_norm", cfg.hidden);
}

Var DecoderLayer::operator()(const Var& x, std::span<const Var> memories,
                             const ForwardContext& ctx) const {
  if (memories.size() != cross_attn.size()) {
    throw ShapeError("decoder layer expects " +
                     std::to_string(cross_attn.size()) + " memories, got " +
                     std::to_string(memories.size()));
  }
  auto* rng = ctx.dropout_rng();
  const std::size_t n = x.rows();
  Var h = self_norm(add(
      x, obsgen::dropout(self_attn(x, x, x, AttentionMask::causal(n), ctx),
                         dropout, rng)));
  for (std::size_t i = 0; i < memories.size(); ++i) {
    const Var& mem = memories[i];
    Var attended = cross_attn[i](h, mem, mem,
                                 AttentionMask::full(n, mem.rows()), ctx);
    h = cross_norm[i](add(h, obsgen::dropout(attended, dropout, rng)));
  }
  return ffn_norm(add(h, obsgen::dropout(ffn(h, ctx), dropout, rng)));
}

}  // namespace obsgen

namespace obsgen {

VisualProjection::VisualProjection(ParameterRegistry& reg, Initializer& init,
                                   const std::string& name,
                                   std::size_t feature_dim, std::size_t hidden,
                                   std::size_t max_regions)
    : proj(reg, init, name + ".proj", feature_dim, hidden),
      positions(reg, init, name + ".positions", max_regions, hidden),
      feature_dim(feature_dim) {}

Var VisualProjection::operator()(const Tensor& features) const {
  if (features.rank() != 2 || features.cols() != feature_dim) {
    throw ConfigError("visual features have shape " +
                      shape_to_string(features.shape()) + ", model expects N x " +
                      std::to_string(feature_dim));
  }
  if (features.rows() == 0 || features.rows() > positions.size()) {
    throw ConfigError("visual features have " + std::to_string(features.rows()) +
                      " regions; model supports 1.." +
                      std::to_string(positions.size()));
  }
  return add(proj(Var(features)), positions.positions(features.rows()));
}

}  // namespace obsgen
