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

#include "obsgen/generator.hpp"

#include <algorithm>
#include <random>

#include "model_util.hpp"
#include "obsgen/errors.hpp"
#include "obsgen/logging.hpp"

namespace obsgen {
namespace {

constexpr int kNgramType = 0;
constexpr int kTokenType = 1;

Var type_row(const Embedding& types, int type) {
  const int id[] = {type};
  return embedding(types.table, id);
}

}  // namespace

void GeneratorConfig::validate() const {
  layer.validate();
  if (feature_dim == 0) throw ConfigError("generator: feature_dim must be set");
  if (max_regions == 0) throw ConfigError("generator: max_regions must be >= 1");
  if (align_layers == 0 || decoder_layers == 0) {
    throw ConfigError("generator: alignment encoder and decoder need layers");
  }
  if (use_plan && graph_layers == 0) {
    throw ConfigError("generator: graph encoder needs at least one layer");
  }
  if (max_report_length < 2) throw ConfigError("generator: max_report_length must be >= 2");
  if (max_plan_positions == 0) throw ConfigError("generator: max_plan_positions must be >= 1");
  if (beta < 1.0) throw ConfigError("generator: beta must be >= 1");
  if (prune_threshold <= 0.0 || prune_threshold >= 1.0) {
    throw ConfigError("generator: prune_threshold must be in (0, 1)");
  }
  if (prune_weight < 0.0) throw ConfigError("generator: prune_weight must be >= 0");
}

std::string GeneratorConfig::to_json() const {
  nlohmann::ordered_json j;
  j["layer"] = detail::layer_to_json(layer);
  j["feature_dim"] = feature_dim;
  j["max_regions"] = max_regions;
  j["graph_layers"] = graph_layers;
  j["align_layers"] = align_layers;
  j["decoder_layers"] = decoder_layers;
  j["max_report_length"] = max_report_length;
  j["max_plan_positions"] = max_plan_positions;
  j["beta"] = beta;
  j["prune_threshold"] = prune_threshold;
  j["prune_weight"] = prune_weight;
  j["use_plan"] = use_plan;
  j["gold_prune_mask"] = gold_prune_mask;
  j["tie_embeddings"] = tie_embeddings;
  return j.dump();
}

GeneratorConfig GeneratorConfig::from_json(const std::string& text) {
  const auto j = detail::parse_config(text, "generator");
  GeneratorConfig c;
  try {
    c.layer = detail::layer_from_json(j.at("layer"));
    c.feature_dim = j.at("feature_dim").get<std::size_t>();
    c.max_regions = j.at("max_regions").get<std::size_t>();
    c.graph_layers = j.at("graph_layers").get<std::size_t>();
    c.align_layers = j.at("align_layers").get<std::size_t>();
    c.decoder_layers = j.at("decoder_layers").get<std::size_t>();
    c.max_report_length = j.at("max_report_length").get<std::size_t>();
    c.max_plan_positions = j.at("max_plan_positions").get<std::size_t>();
    c.beta = j.at("beta").get<double>();
    c.prune_threshold = j.at("prune_threshold").get<double>();
    c.prune_weight = j.at("prune_weight").get<double>();
    c.use_plan = j.at("use_plan").get<bool>();
    c.gold_prune_mask = j.at("gold_prune_mask").get<bool>();
    c.tie_embeddings = j.value("tie_embeddings", false);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
  c.validate();
  return c;
}

Generator::Generator(GeneratorConfig cfg, Vocabulary vocab, std::uint64_t seed)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
  cfg_.validate();
  Initializer init(seed);
  const std::size_t h = cfg_.layer.hidden;
  words_ = Embedding(params_, init, "generator.words", vocab_.size(), h);
  word_positions_ = Embedding(params_, init, "generator.word_positions",
                              cfg_.max_report_length, h);
  visual_ = VisualProjection(params_, init, "generator.visual", cfg_.feature_dim, h,
                             cfg_.max_regions);
  align_encoder_ = Encoder(params_, init, "generator.align", cfg_.layer, cfg_.align_layers);
  std::vector<std::string> memories{"visual"};
  if (cfg_.use_plan) {
    observations_ = Embedding(params_, init, "generator.observations", kNumObservations, h);
    plan_positions_ = Embedding(params_, init, "generator.plan_positions",
                                cfg_.max_plan_positions, h);
    node_types_ = Embedding(params_, init, "generator.node_types", 2, h);
    graph_encoder_ = Encoder(params_, init, "generator.graph", cfg_.layer, cfg_.graph_layers);
    prune_head_ = Linear(params_, init, "generator.prune", h, 1);
    memories = {"observation", "visual"};
  }
  for (std::size_t i = 0; i < cfg_.decoder_layers; ++i) {
    decoder_.emplace_back(params_, init, "generator.decoder" + std::to_string(i),
                          cfg_.layer, memories);
  }
  if (cfg_.use_plan) {
    trr_self_attn_ = MultiHeadAttention(params_, init, "generator.trr.self_attn", cfg_.layer);
    trr_self_norm_ = LayerNorm(params_, "generator.trr.self_norm", h);
    trr_attn_ = MultiHeadAttention(params_, init, "generator.trr.attn", cfg_.layer);
    trr_norm_ = LayerNorm(params_, "generator.trr.norm", h);
    trr_ffn_ = FeedForward(params_, init, "generator.trr.ffn", cfg_.layer);
    trr_ffn_norm_ = LayerNorm(params_, "generator.trr.ffn_norm", h);
  }
  if (cfg_.tie_embeddings) {
    head_.bias = params_.add("generator.head.bias", Tensor({1, vocab_.size()}));
  } else {
    head_ = Linear(params_, init, "generator.head", h, vocab_.size());
  }
}

Var Generator::output_logits(const Var& x) const {
  if (!cfg_.tie_embeddings) return head_(x);
  return add_row(matmul_nt(x, words_.table), head_.bias);
}

GraphEncoding Generator::encode_graph(const ObservationGraph& g,
                                      const ForwardContext& ctx) const {
  if (!cfg_.use_plan) throw ConfigError("generator: no-plan variant has no graph encoder");
  if (g.observations.empty()) throw DataError("generator: graph has no observation nodes");
  if (g.observations.size() > cfg_.max_plan_positions) {
    throw DataError("generator: plan of " + std::to_string(g.observations.size()) +
                    " observations exceeds max_plan_positions");
  }
  std::vector<int> obs_ids;
  for (const auto& o : g.observations) obs_ids.push_back(o.id());
  std::vector<Var> parts{
      add(observations_(obs_ids), plan_positions_.positions(obs_ids.size()))};
  if (!g.ngrams.empty()) {
    std::vector<std::vector<int>> bags;
    for (const auto& ng : g.ngrams) bags.push_back(vocab_.encode(ng));
    parts.push_back(add_row(embedding_bag_mean(words_.table, bags),
                            type_row(node_types_, kNgramType)));
  }
  if (!g.tokens.empty()) {
    parts.push_back(add_row(words_(vocab_.encode(g.tokens)),
                            type_row(node_types_, kTokenType)));
  }
  Var n = dropout(concat_rows(parts), cfg_.layer.dropout, ctx.dropout_rng());
  const Var encoded = graph_encoder_(n, adjacency_mask(g), ctx);

  GraphEncoding out;
  out.z = slice_rows(encoded, 0, g.ngram_offset());
  if (!g.ngrams.empty()) out.s = slice_rows(encoded, g.ngram_offset(), g.token_offset());
  if (!g.tokens.empty()) out.t = slice_rows(encoded, g.token_offset(), g.num_nodes());
  return out;
}

Alignment Generator::align(const Tensor& features, const std::optional<Var>& t,
                           const ForwardContext& ctx) const {
  Var x = dropout(visual_(features), cfg_.layer.dropout, ctx.dropout_rng());
  Alignment out;
  if (!t) {
    out.h_v = align_encoder_(x, AttentionMask::full(x.rows(), x.rows()), ctx);
    return out;
  }
  const std::size_t nv = x.rows();
  const std::size_t n = nv + t->rows();
  AttentionMask mask = AttentionMask::full(n, n);
  for (std::size_t i = 0; i < nv; ++i) {
    for (std::size_t j = nv; j < n; ++j) mask.set(i, j, false);
  }
  const Var parts[] = {x, *t};
  const Var encoded = align_encoder_(concat_rows(parts), mask, ctx);
  out.h_v = slice_rows(encoded, 0, nv);
  out.t_aligned = slice_rows(encoded, nv, n);
  return out;
}

PruneResult Generator::prune(const std::optional<Var>& t_aligned) const {
  PruneResult out;
  if (!t_aligned) return out;
  out.logits = prune_head_(*t_aligned);
  const Tensor& lv = out.logits->value();
  for (std::size_t i = 0; i < lv.rows(); ++i) {
    const double p = sigmoid(lv(i, 0));
    out.keep_probability.push_back(p);
    if (p >= cfg_.prune_threshold) out.kept.push_back(i);
  }
  return out;
}

Var Generator::tree_reason(const Var& query, const Var& z,
                           const std::optional<Var>& s,
                           const std::optional<Var>& t_masked,
                           const ForwardContext& ctx) const {
  Var q = query;
  auto hop = [&](const Var& level) {
    const Var v = trr_attn_(q, level, level,
                            AttentionMask::full(q.rows(), level.rows()), ctx);
    q = trr_norm_(add(q, dropout(v, cfg_.layer.dropout, ctx.dropout_rng())));
  };
  hop(z);
  if (s) hop(*s);
  if (t_masked) hop(*t_masked);
  return q;
}

GeneratorMemory Generator::encode(const Tensor& features,
                                  const ObservationGraph& graph,
                                  const ForwardContext& ctx,
                                  std::span<const double> gold_membership) const {
  GeneratorMemory m;
  if (!cfg_.use_plan) {
    m.h_v = align(features, std::nullopt, ctx).h_v;
    return m;
  }
  m.graph = encode_graph(graph, ctx);
  Alignment a = align(features, m.graph.t, ctx);
  m.h_v = a.h_v;
  m.prune = prune(a.t_aligned);
  std::vector<std::size_t> kept = m.prune.kept;
  if (cfg_.gold_prune_mask && ctx.training && !gold_membership.empty()) {
    kept.clear();
    for (std::size_t i = 0; i < gold_membership.size(); ++i) {
      if (gold_membership[i] > 0.5) kept.push_back(i);
    }
  }
  if (m.graph.t && !kept.empty()) m.t_masked = gather_rows(*m.graph.t, kept);
  return m;
}

Var Generator::decode(const GeneratorMemory& memory, std::span<const int> prefix,
                      const ForwardContext& ctx) const {
  if (prefix.empty() || prefix.front() != Vocabulary::kBos) {
    throw DataError("generator: prefix must start with BOS");
  }
  Var x = add(words_(prefix), word_positions_.positions(prefix.size()));
  x = dropout(x, cfg_.layer.dropout, ctx.dropout_rng());
  std::vector<Var> memories;
  if (cfg_.use_plan) memories.push_back(memory.graph.z);
  memories.push_back(memory.h_v);
  for (const auto& layer : decoder_) x = layer(x, memories, ctx);
  if (!cfg_.use_plan) return output_logits(x);

  const Var self = trr_self_attn_(x, x, x, AttentionMask::causal(x.rows()), ctx);
  const Var d = trr_self_norm_(add(x, dropout(self, cfg_.layer.dropout, ctx.dropout_rng())));
  Var q = tree_reason(d, memory.graph.z, memory.graph.s, memory.t_masked, ctx);
  q = trr_ffn_norm_(add(q, dropout(trr_ffn_(q, ctx), cfg_.layer.dropout, ctx.dropout_rng())));
  return output_logits(q);
}

std::vector<int> Generator::report_ids(std::span<const std::string> report) const {
  std::vector<int> ids = vocab_.encode(report);
  if (ids.size() + 1 > cfg_.max_report_length) ids.resize(cfg_.max_report_length - 1);
  return ids;
}

Var prune_loss(const Var& logits, std::span<const double> membership, double beta) {
  if (logits.rows() != membership.size()) {
    throw DataError("prune: " + std::to_string(membership.size()) +
                    " membership labels for " + std::to_string(logits.rows()) +
                    " token nodes");
  }
  return weighted_bce_with_logits(logits, membership, beta);
}

GeneratorLossTerms Generator::loss(const GeneratorExample& example,
                                   const ForwardContext& ctx) const {
  const std::vector<int> ids = report_ids(example.report);
  std::vector<int> prefix{Vocabulary::kBos};
  prefix.insert(prefix.end(), ids.begin(), ids.end());
  std::vector<int> targets = ids;
  targets.push_back(Vocabulary::kEos);

  std::vector<double> membership;
  if (cfg_.use_plan) membership = token_membership(example.graph, example.report);
  const GeneratorMemory memory = encode(example.features, example.graph, ctx, membership);
  const Var logits = decode(memory, prefix, ctx);
  const std::vector<double> ones(targets.size(), 1.0);

  GeneratorLossTerms terms;
  terms.loss = cross_entropy(logits, targets, ones);
  terms.report_nll = terms.loss.value().item();
  if (memory.prune.logits) {
    const Var ld = prune_loss(*memory.prune.logits, membership, cfg_.beta);
    terms.prune_loss = ld.value().item();
    terms.loss = add(terms.loss, scale(ld, cfg_.prune_weight));
  }
  return terms;
}

std::pair<std::size_t, std::size_t> Generator::teacher_forced_matches(
    const GeneratorExample& example) const {
  NoGradGuard no_grad;
  const ForwardContext ctx;
  const std::vector<int> ids = report_ids(example.report);
  std::vector<int> prefix{Vocabulary::kBos};
  prefix.insert(prefix.end(), ids.begin(), ids.end());
  std::vector<int> targets = ids;
  targets.push_back(Vocabulary::kEos);
  const GeneratorMemory memory = encode(example.features, example.graph, ctx);
  const Tensor logits = decode(memory, prefix, ctx).value();
  std::size_t correct = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto row = logits.row(t);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    if (best == targets[t]) ++correct;
  }
  return {correct, targets.size()};
}

std::vector<std::string> Generator::generate(const Tensor& features,
                                             const ObservationGraph& graph,
                                             const BeamConfig& beam) const {
  NoGradGuard no_grad;
  const ForwardContext ctx;
  const GeneratorMemory memory = encode(features, graph, ctx);
  StepFn step = [&](std::span<const int> prefix) {
    const Var logits = decode(memory, prefix, ctx);
    const auto row = logits.value().row(logits.rows() - 1);
    return std::vector<double>(row.begin(), row.end());
  };
  BeamConfig cfg = beam;
  cfg.max_steps = std::min(cfg.max_steps, cfg_.max_report_length - 1);
  DecodeOptions opts;
  opts.bos = Vocabulary::kBos;
  opts.eos = Vocabulary::kEos;
  opts.banned = {Vocabulary::kPad, Vocabulary::kBos, Vocabulary::kUnk};
  return vocab_.decode(beam_search(step, cfg, opts));
}

ModelBundle Generator::to_bundle() const {
  nlohmann::ordered_json j;
  j["model"] = nlohmann::ordered_json::parse(cfg_.to_json());
  j["vocab"] = vocab_.tokens();
  return bundle_from_registry(kKind, j.dump(), params_);
}

Generator Generator::from_bundle(const ModelBundle& bundle) {
  if (bundle.kind != kKind) {
    throw DataError("checkpoint holds a '" + bundle.kind + "' model, expected generator");
  }
  const auto j = detail::parse_config(bundle.config, "generator");
  std::vector<std::string> tokens;
  GeneratorConfig cfg;
  try {
    cfg = GeneratorConfig::from_json(j.at("model").dump());
    tokens = j.at("vocab").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator checkpoint config: ") + e.what());
  }
  Generator model(cfg, Vocabulary(tokens), 0);
  restore_parameters(bundle, model.params_);
  return model;
}

std::vector<GeneratorEpoch> train_generator(Generator& model,
                                            std::span<const GeneratorExample> train,
                                            const TrainConfig& train_cfg,
                                            const GeneratorEpochCallback& on_epoch) {
  if (train.empty()) throw DataError("train_generator: no training examples");
  if (train_cfg.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  const std::size_t batches =
      (train.size() + train_cfg.batch_size - 1) / train_cfg.batch_size;
  AdamWConfig opt_cfg;
  opt_cfg.learning_rate = train_cfg.learning_rate;
  opt_cfg.weight_decay = train_cfg.weight_decay;
  opt_cfg.max_grad_norm = train_cfg.max_grad_norm;
  opt_cfg.total_steps = batches * train_cfg.epochs;
  AdamW opt(model.parameters(), opt_cfg);

  std::mt19937_64 rng(train_cfg.seed);
  ForwardContext ctx;
  ctx.training = true;
  ctx.rng = &rng;

  std::vector<GeneratorEpoch> history;
  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), train_cfg.seed, epoch);
    GeneratorEpoch stats;
    stats.epoch = epoch;
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t i = b * train_cfg.batch_size;
           i < std::min(train.size(), (b + 1) * train_cfg.batch_size); ++i) {
        auto terms = model.loss(train[order[i]], ctx);
        stats.loss += terms.loss.value().item();
        stats.report_nll += terms.report_nll;
        stats.prune_loss += terms.prune_loss;
        backward(terms.loss);
      }
      opt.step();
    }
    const double n = static_cast<double>(train.size());
    stats.loss /= n;
    stats.report_nll /= n;
    stats.prune_loss /= n;
    log_info("generator epoch " + std::to_string(epoch) + " loss " +
             std::to_string(stats.loss));
    if (on_epoch) on_epoch(stats);
    history.push_back(stats);
  }
  return history;
}

}  // namespace obsgen
