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

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "obsgen/checkpoint.hpp"
#include "obsgen/corpus.hpp"
#include "obsgen/decoding.hpp"
#include "obsgen/nn.hpp"
#include "obsgen/obsgraph.hpp"
#include "obsgen/optim.hpp"

namespace obsgen {

struct GeneratorConfig {
  LayerConfig layer;
  std::size_t feature_dim = 0;
  std::size_t max_regions = 64;
  std::size_t graph_layers = 2;
  std::size_t align_layers = 3;
  std::size_t decoder_layers = 3;
  /// Decoder positions; reports are cut to max_report_length - 1 tokens
  /// plus EOS.
  std::size_t max_report_length = 128;
  std::size_t max_plan_positions = 32;
  double beta = 2.0;
  double prune_threshold = 0.5;
  /// L_g = L_r + prune_weight * L_d.
  double prune_weight = 1.0;
  /// false: plain encoder-decoder without plan, graph or tree reasoning.
  bool use_plan = true;
  /// Select T^M rows with the gold membership while training instead of
  /// the predicted keep-probabilities.
  bool gold_prune_mask = false;
  /// Output projection shares the word embedding table.
  bool tie_embeddings = false;

  void validate() const;
  std::string to_json() const;
  static GeneratorConfig from_json(const std::string& text);
};

struct GeneratorExample {
  Tensor features;
  ObservationGraph graph;  // ignored by the no-plan variant
  std::vector<std::string> report;
};

/// Encoder_g outputs split by level; absent levels are nullopt.
struct GraphEncoding {
  Var z;
  std::optional<Var> s;
  std::optional<Var> t;
};

struct Alignment {
  Var h_v;
  std::optional<Var> t_aligned;
};

struct PruneResult {
  std::optional<Var> logits;            // |T| x 1
  std::vector<double> keep_probability;
  std::vector<std::size_t> kept;        // indices into T
};

/// Everything the decoder attends to for one example.
struct GeneratorMemory {
  Var h_v;
  GraphEncoding graph;
  PruneResult prune;
  std::optional<Var> t_masked;
};

struct GeneratorLossTerms {
  Var loss;
  double report_nll = 0.0;
  double prune_loss = 0.0;
};

class Generator {
 public:
  Generator(GeneratorConfig cfg, Vocabulary vocab, std::uint64_t seed);
  Generator(Generator&&) = default;
  Generator& operator=(Generator&&) = default;
  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;

  const GeneratorConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParameterRegistry& parameters() { return params_; }
  const ParameterRegistry& parameters() const { return params_; }

  /// Encoder_g over Embed(V) + P under the adjacency mask.
  GraphEncoding encode_graph(const ObservationGraph& g,
                             const ForwardContext& ctx) const;
  /// Encoder_u over [X; T]; visual rows never see token rows.
  Alignment align(const Tensor& features, const std::optional<Var>& t,
                  const ForwardContext& ctx) const;
  /// Keep-probabilities from T^A; a node is kept when p >= threshold.
  PruneResult prune(const std::optional<Var>& t_aligned) const;
  /// Three hops over Z, S, T^M with one shared attention and norm; empty
  /// levels are skipped.
  Var tree_reason(const Var& query, const Var& z, const std::optional<Var>& s,
                  const std::optional<Var>& t_masked,
                  const ForwardContext& ctx) const;

  /// `gold_membership` selects T^M when gold_prune_mask is on.
  GeneratorMemory encode(const Tensor& features, const ObservationGraph& graph,
                         const ForwardContext& ctx,
                         std::span<const double> gold_membership = {}) const;
  /// Logits (prefix length x |vocab|); row t predicts the token after
  /// prefix[t].
  Var decode(const GeneratorMemory& memory, std::span<const int> prefix,
             const ForwardContext& ctx) const;

  GeneratorLossTerms loss(const GeneratorExample& example,
                          const ForwardContext& ctx) const;

  /// Fraction of report tokens (EOS included) whose teacher-forced argmax
  /// is correct; returns (correct, total).
  std::pair<std::size_t, std::size_t> teacher_forced_matches(
      const GeneratorExample& example) const;

  std::vector<std::string> generate(const Tensor& features,
                                    const ObservationGraph& graph,
                                    const BeamConfig& beam) const;

  ModelBundle to_bundle() const;
  static Generator from_bundle(const ModelBundle& bundle);

  static constexpr const char* kKind = "generator";

 private:
  std::vector<int> report_ids(std::span<const std::string> report) const;
  Var output_logits(const Var& x) const;

  GeneratorConfig cfg_;
  Vocabulary vocab_;
  ParameterRegistry params_;
  Embedding words_;
  Embedding word_positions_;
  VisualProjection visual_;
  Encoder align_encoder_;
  std::vector<DecoderLayer> decoder_;
  Linear head_;  // weight unused when tied
  // Plan path only.
  Embedding observations_;
  Embedding plan_positions_;
  Embedding node_types_;
  Encoder graph_encoder_;
  Linear prune_head_;
  MultiHeadAttention trr_self_attn_;
  LayerNorm trr_self_norm_;
  MultiHeadAttention trr_attn_;
  LayerNorm trr_norm_;
  FeedForward trr_ffn_;
  LayerNorm trr_ffn_norm_;
};

/// The generator's pruning loss on precomputed logits:
/// sum_i -beta d_i log p_i - (1 - d_i) log(1 - p_i).
Var prune_loss(const Var& logits, std::span<const double> membership, double beta);

struct GeneratorEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  double report_nll = 0.0;
  double prune_loss = 0.0;
};

using GeneratorEpochCallback = std::function<void(const GeneratorEpoch&)>;

std::vector<GeneratorEpoch> train_generator(
    Generator& model, std::span<const GeneratorExample> train,
    const TrainConfig& train_cfg, const GeneratorEpochCallback& on_epoch = {});

}  // namespace obsgen
