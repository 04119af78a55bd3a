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

#include "obsgen/planner.hpp"

#include <algorithm>
#include <random>

#include "model_util.hpp"
#include "obsgen/errors.hpp"
#include "obsgen/logging.hpp"

namespace obsgen {

Observation plan_observation(int token) {
  if (token < kPlanSpecials || token >= kPlanVocab) {
    throw VocabularyError("planner token " + std::to_string(token) +
                          " is not an observation");
  }
  return Observation::from_id(token - kPlanSpecials);
}

void PlannerConfig::validate() const {
  layer.validate();
  if (feature_dim == 0) throw ConfigError("planner: feature_dim must be set");
  if (max_regions == 0) throw ConfigError("planner: max_regions must be >= 1");
  if (encoder_layers == 0 || decoder_layers == 0) {
    throw ConfigError("planner: encoder and decoder need at least one layer");
  }
  if (max_plan_length < 2) throw ConfigError("planner: max_plan_length must be >= 2");
  if (alpha < 0.0) throw ConfigError("planner: alpha must be >= 0");
}

std::string PlannerConfig::to_json() const {
  nlohmann::ordered_json j;
  j["layer"] = detail::layer_to_json(layer);
  j["feature_dim"] = feature_dim;
  j["max_regions"] = max_regions;
  j["encoder_layers"] = encoder_layers;
  j["decoder_layers"] = decoder_layers;
  j["max_plan_length"] = max_plan_length;
  j["alpha"] = alpha;
  return j.dump();
}

PlannerConfig PlannerConfig::from_json(const std::string& text) {
  const auto j = detail::parse_config(text, "planner");
  PlannerConfig c;
  try {
    c.layer = detail::layer_from_json(j.at("layer"));
    c.feature_dim = j.at("feature_dim").get<std::size_t>();
    c.max_regions = j.at("max_regions").get<std::size_t>();
    c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
    c.decoder_layers = j.at("decoder_layers").get<std::size_t>();
    c.max_plan_length = j.at("max_plan_length").get<std::size_t>();
    c.alpha = j.at("alpha").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("planner config: ") + e.what());
  }
  c.validate();
  return c;
}

double plan_step_weight(Observation obs, double alpha) {
  const bool no_finding = obs.category == Category::kNoFinding;
  if (no_finding) return obs.positive() ? 1.0 : 1.0 + alpha;
  return obs.positive() ? 1.0 + alpha : 1.0;
}

Planner::Planner(PlannerConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Initializer init(seed);
  const std::size_t h = cfg_.layer.hidden;
  visual_ = VisualProjection(params_, init, "planner.visual", cfg_.feature_dim, h,
                             cfg_.max_regions);
  encoder_ = Encoder(params_, init, "planner.encoder", cfg_.layer, cfg_.encoder_layers);
  tokens_ = Embedding(params_, init, "planner.tokens", kPlanVocab, h);
  positions_ = Embedding(params_, init, "planner.positions", cfg_.max_plan_length, h);
  for (std::size_t i = 0; i < cfg_.decoder_layers; ++i) {
    decoder_.emplace_back(params_, init, "planner.decoder" + std::to_string(i),
                          cfg_.layer, std::vector<std::string>{"visual"});
  }
  head_ = Linear(params_, init, "planner.head", h, kPlanVocab);
}

Var Planner::encode_visual(const Tensor& features, const ForwardContext& ctx) const {
  Var x = visual_(features);
  return encoder_(x, AttentionMask::full(x.rows(), x.rows()), ctx);
}

Var Planner::step_logits(const Var& h_v, std::span<const int> prefix,
                         const ForwardContext& ctx) const {
  if (prefix.empty() || prefix.front() != kPlanBos) {
    throw DataError("planner: prefix must start with BOS");
  }
  Var x = add(tokens_(prefix), positions_.positions(prefix.size()));
  x = dropout(x, cfg_.layer.dropout, ctx.dropout_rng());
  const Var memories[] = {h_v};
  for (const auto& layer : decoder_) x = layer(x, memories, ctx);
  return head_(x);
}

PlannerLossTerms Planner::loss(const PlannerExample& example, double alpha,
                               const ForwardContext& ctx) const {
  if (alpha < 0.0) throw ConfigError("planner: alpha must be >= 0");
  if (example.plan.size() + 1 > cfg_.max_plan_length) {
    throw DataError("planner: plan of " + std::to_string(example.plan.size()) +
                    " observations exceeds max_plan_length");
  }
  std::vector<int> prefix{kPlanBos};
  std::vector<int> targets;
  PlannerLossTerms terms;
  for (const auto& obs : example.plan) {
    prefix.push_back(plan_token(obs));
    targets.push_back(plan_token(obs));
    terms.weights.push_back(plan_step_weight(obs, alpha));
  }
  targets.push_back(kPlanEos);
  terms.weights.push_back(1.0);

  const Var h_v = encode_visual(example.features, ctx);
  const Var logits = step_logits(h_v, prefix, ctx);
  terms.loss = cross_entropy(logits, targets, terms.weights);
  const Tensor& lv = logits.value();
  for (std::size_t t = 0; t < targets.size(); ++t) {
    terms.nll.push_back(-log_softmax_row(lv.row(t))(0, static_cast<std::size_t>(targets[t])));
  }
  return terms;
}

std::vector<Observation> Planner::predict(const Tensor& features,
                                          const BeamConfig& beam) const {
  NoGradGuard no_grad;
  const ForwardContext ctx;
  const Var h_v = encode_visual(features, ctx);
  StepFn step = [&](std::span<const int> prefix) {
    const Var logits = step_logits(h_v, prefix, ctx);
    const auto row = logits.value().row(logits.rows() - 1);
    return std::vector<double>(row.begin(), row.end());
  };
  BeamConfig cfg = beam;
  cfg.max_steps = std::min(cfg.max_steps, cfg_.max_plan_length - 1);
  DecodeOptions opts;
  opts.bos = kPlanBos;
  opts.eos = kPlanEos;
  opts.banned = {kPlanPad, kPlanBos};
  opts.block_repeats = true;
  std::vector<Observation> plan;
  for (int tok : beam_search(step, cfg, opts)) {
    if (tok == kPlanEos) break;
    plan.push_back(plan_observation(tok));
  }
  return plan;
}

ModelBundle Planner::to_bundle() const {
  return bundle_from_registry(kKind, cfg_.to_json(), params_);
}

Planner Planner::from_bundle(const ModelBundle& bundle) {
  if (bundle.kind != kKind) {
    throw DataError("checkpoint holds a '" + bundle.kind + "' model, expected planner");
  }
  Planner model(PlannerConfig::from_json(bundle.config), 0);
  restore_parameters(bundle, model.params_);
  return model;
}

PlannerLossTerms planner_loss(const Planner& model,
                              std::span<const PlannerExample> batch,
                              double alpha, const ForwardContext& ctx) {
  PlannerLossTerms total;
  std::vector<Var> parts;
  for (const auto& ex : batch) {
    if (ex.plan.empty()) {
      log_warning("planner_loss: skipping example with empty plan");
      continue;
    }
    auto t = model.loss(ex, alpha, ctx);
    parts.push_back(t.loss);
    total.nll.insert(total.nll.end(), t.nll.begin(), t.nll.end());
    total.weights.insert(total.weights.end(), t.weights.begin(), t.weights.end());
  }
  if (parts.empty()) {
    total.loss = Var(Tensor::scalar(0.0));
    return total;
  }
  total.loss = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) total.loss = add(total.loss, parts[i]);
  return total;
}

CeScores evaluate_planner(const Planner& model,
                          std::span<const PlannerExample> examples,
                          const BeamConfig& beam) {
  std::vector<std::vector<Observation>> predicted;
  std::vector<std::vector<Observation>> gold;
  for (const auto& ex : examples) {
    predicted.push_back(model.predict(ex.features, beam));
    gold.push_back(ex.plan);
  }
  return clinical_efficacy(predicted, gold);
}

PlannerTraining train_planner(Planner& model,
                              std::span<const PlannerExample> train,
                              std::span<const PlannerExample> validation,
                              const TrainConfig& train_cfg,
                              const BeamConfig& beam,
                              const PlannerEpochCallback& on_epoch) {
  if (train.empty()) throw DataError("train_planner: no training examples");
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

  PlannerTraining result;
  double best = -1.0;
  std::vector<Tensor> best_weights;
  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), train_cfg.seed, epoch);
    PlannerEpoch stats;
    stats.epoch = epoch;
    for (std::size_t b = 0; b < batches; ++b) {
      bool any = false;
      for (std::size_t i = b * train_cfg.batch_size;
           i < std::min(train.size(), (b + 1) * train_cfg.batch_size); ++i) {
        const auto& ex = train[order[i]];
        if (ex.plan.empty()) continue;
        auto terms = model.loss(ex, model.config().alpha, ctx);
        stats.loss += terms.loss.value().item();
        backward(terms.loss);
        any = true;
      }
      if (any) opt.step();
    }
    stats.loss /= static_cast<double>(train.size());

    if (!validation.empty() && train_cfg.eval_every > 0 &&
        (epoch % train_cfg.eval_every == 0 || epoch == train_cfg.epochs)) {
      const auto scores = evaluate_planner(model, validation, beam);
      stats.evaluated = true;
      stats.micro_f1 = scores.f1;
      stats.macro_f1 = scores.macro_f1_positive;
      if (scores.f1 > best) {
        best = scores.f1;
        result.best_epoch = epoch;
        best_weights = detail::snapshot(model.parameters());
      }
    }
    log_info("planner epoch " + std::to_string(epoch) + " loss " +
             std::to_string(stats.loss) +
             (stats.evaluated ? " micro-F1 " + std::to_string(stats.micro_f1) : ""));
    if (on_epoch) on_epoch(stats);
    result.epochs.push_back(stats);
  }
  if (!best_weights.empty()) detail::restore(model.parameters(), best_weights);
  return result;
}

}  // namespace obsgen
