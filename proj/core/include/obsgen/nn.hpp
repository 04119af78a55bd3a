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

#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "obsgen/autograd.hpp"

namespace obsgen {

/// Transformer block dimensions shared by every stack in a model.
struct LayerConfig {
  std::size_t hidden = 512;
  int num_heads = 8;
  std::size_t ffn = 512;
  double dropout = 0.1;

  void validate() const;
};

/// Recorded attention weights, one entry per attention call while a trace
/// is attached to the forward context.
struct AttentionTrace {
  struct Entry {
    std::string label;
    std::vector<Tensor> heads;
  };
  std::vector<Entry> entries;
};

struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;
  AttentionTrace* trace = nullptr;

  std::mt19937_64* dropout_rng() const { return training ? rng : nullptr; }
};

/// Ordered name -> parameter table. Names are unique; order is the
/// registration order and defines the checkpoint layout.
class ParameterRegistry {
 public:
  Var add(const std::string& name, Tensor init);
  const std::vector<std::pair<std::string, Var>>& entries() const {
    return entries_;
  }
  Var find(const std::string& name) const;
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Var>> entries_;
};

/// Seeded weight initialisation.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  /// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
  Tensor projection(std::size_t fan_in, std::size_t fan_out);
  /// normal(0, 0.02)
  Tensor embedding(std::size_t rows, std::size_t dim);

 private:
  std::mt19937_64 rng_;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterRegistry& reg, Initializer& init, const std::string& name,
         std::size_t in, std::size_t out);

  Var operator()(const Var& x) const;

  Var weight;  // in x out
  Var bias;    // 1 x out
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterRegistry& reg, const std::string& name, std::size_t dim);

  Var operator()(const Var& x) const { return layer_norm(x, gain, bias, kEps); }

  static constexpr double kEps = 1e-5;
  Var gain;
  Var bias;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(ParameterRegistry& reg, Initializer& init, const std::string& name,
            std::size_t rows, std::size_t dim);

  Var operator()(std::span<const int> ids) const {
    return embedding(table, ids);
  }
  /// Rows 0..count-1, as used for learned positions.
  Var positions(std::size_t count) const;
  std::size_t size() const { return table.rows(); }

  Var table;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterRegistry& reg, Initializer& init,
                     const std::string& name, const LayerConfig& cfg);

  /// softmax((q Wq)(k Wk)^T / sqrt(h/heads) + mask) (v Wv), per head,
  /// concatenated and projected by Wo.
  Var operator()(const Var& query, const Var& key, const Var& value,
                 const AttentionMask& mask, const ForwardContext& ctx) const;

  Linear q_proj;
  Linear k_proj;
  Linear v_proj;
  Linear out_proj;
  int num_heads = 1;
  std::string label;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterRegistry& reg, Initializer& init,
              const std::string& name, const LayerConfig& cfg);

  Var operator()(const Var& x, const ForwardContext& ctx) const;

  Linear in;
  Linear out;
  double dropout = 0.0;
};

/// Post-norm encoder block: LN(x + MHA(x)), then LN(x + FFN(x)).
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(ParameterRegistry& reg, Initializer& init,
               const std::string& name, const LayerConfig& cfg);

  Var operator()(const Var& x, const AttentionMask& mask,
                 const ForwardContext& ctx) const;

  MultiHeadAttention self_attn;
  LayerNorm norm1;
  FeedForward ffn;
  LayerNorm norm2;
  double dropout = 0.0;
};

/// Encoder stack sharing one mask across layers.
class Encoder {
 public:
  Encoder() = default;
  Encoder(ParameterRegistry& reg, Initializer& init, const std::string& name,
          const LayerConfig& cfg, std::size_t num_layers);

  Var operator()(Var x, const AttentionMask& mask,
                 const ForwardContext& ctx) const;

  std::vector<EncoderLayer> layers;
};

/// Post-norm decoder block: causal self-attention, then one cross-attention
/// sub-layer per memory in order, then the feed-forward sub-layer.
class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(ParameterRegistry& reg, Initializer& init,
               const std::string& name, const LayerConfig& cfg,
               const std::vector<std::string>& memory_names);

  Var operator()(const Var& x, std::span<const Var> memories,
                 const ForwardContext& ctx) const;

  MultiHeadAttention self_attn;
  LayerNorm self_norm;
  std::vector<MultiHeadAttention> cross_attn;
  std::vector<LayerNorm> cross_norm;
  FeedForward ffn;
  LayerNorm ffn_norm;
  double dropout = 0.0;
};

/// Projects an N x d_v feature matrix to N x h and adds learned region
/// positions.
class VisualProjection {
 public:
  VisualProjection() = default;
  VisualProjection(ParameterRegistry& reg, Initializer& init,
                   const std::string& name, std::size_t feature_dim,
                   std::size_t hidden, std::size_t max_regions);

  /// ConfigError when the feature width or region count does not fit.
  Var operator()(const Tensor& features) const;

  Linear proj;
  Embedding positions;
  std::size_t feature_dim = 0;
};

}  // namespace obsgen
