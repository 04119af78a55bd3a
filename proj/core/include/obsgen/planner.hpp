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
#include <span>
#include <string>
#include <vector>

#include "obsgen/checkpoint.hpp"
#include "obsgen/corpus.hpp"
#include "obsgen/decoding.hpp"
#include "obsgen/eval.hpp"
#include "obsgen/nn.hpp"
#include "obsgen/optim.hpp"

namespace obsgen {

// Planner output ids: three specials, then observation id + 3.
inline constexpr int kPlanPad = 0;
inline constexpr int kPlanBos = 1;
inline constexpr int kPlanEos = 2;
inline constexpr int kPlanSpecials = 3;
inline constexpr int kPlanVocab = kNumObservations + kPlanSpecials;

inline int plan_token(Observation obs) { return obs.id() + kPlanSpecials; }
Observation plan_observation(int token);

struct PlannerConfig {
  LayerConfig layer;
  std::size_t feature_dim = 0;
  std::size_t max_regions = 64;
  std::size_t encoder_layers = 3;
  std::size_t decoder_layers = 3;
  /// Learned decoder positions; bounds the plan length (BOS included).
  std::size_t max_plan_length = 32;
  double alpha = 0.5;

  void validate() const;
  std::string to_json() const;
  static PlannerConfig from_json(const std::string& text);
};

/// 1 + alpha for positive abnormal observations and for No Finding/NEG;
/// 1 for every other observation.
double plan_step_weight(Observation obs, double alpha);

struct PlannerExample {
  Tensor features;
  std::vector<Observation> plan;
};

struct PlannerLossTerms {
  Var loss;
  /// Per decoding step (plan entries, then EOS).
  std::vector<double> nll;
  std::vector<double> weights;
};

class Planner {
 public:
  Planner(PlannerConfig cfg, std::uint64_t seed);
  Planner(Planner&&) = default;
  Planner& operator=(Planner&&) = default;
  Planner(const Planner&) = delete;
  Planner& operator=(const Planner&) = delete;

  const PlannerConfig& config() const { return cfg_; }
  ParameterRegistry& parameters() { return params_; }
  const ParameterRegistry& parameters() const { return params_; }

  /// h_v = Encoder_p(MLP(X) + positions).
  Var encode_visual(const Tensor& features, const ForwardContext& ctx) const;
  /// Logits (prefix length x 31), causally masked; row t predicts the
  /// token after prefix[t].
  Var step_logits(const Var& h_v, std::span<const int> prefix,
                  const ForwardContext& ctx) const;

  /// Weighted teacher-forced NLL of plan + EOS.
  PlannerLossTerms loss(const PlannerExample& example, double alpha,
                        const ForwardContext& ctx) const;

  /// Beam search with repeated observations blocked.
  std::vector<Observation> predict(const Tensor& features,
                                   const BeamConfig& beam) const;

  ModelBundle to_bundle() const;
  static Planner from_bundle(const ModelBundle& bundle);

  static constexpr const char* kKind = "planner";

 private:
  PlannerConfig cfg_;
  ParameterRegistry params_;
  VisualProjection visual_;
  Encoder encoder_;
  Embedding tokens_;
  Embedding positions_;
  std::vector<DecoderLayer> decoder_;
  Linear head_;
};

/// Sum of per-example losses; examples with empty plans are skipped with a
/// warning.
PlannerLossTerms planner_loss(const Planner& model,
                              std::span<const PlannerExample> batch,
                              double alpha, const ForwardContext& ctx);

struct PlannerEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  bool evaluated = false;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
};

struct PlannerTraining {
  std::vector<PlannerEpoch> epochs;
  /// Epoch whose weights were kept (best validation micro-F1), 0 if none.
  std::size_t best_epoch = 0;
};

using PlannerEpochCallback = std::function<void(const PlannerEpoch&)>;

PlannerTraining train_planner(Planner& model,
                              std::span<const PlannerExample> train,
                              std::span<const PlannerExample> validation,
                              const TrainConfig& train_cfg,
                              const BeamConfig& beam,
                              const PlannerEpochCallback& on_epoch = {});

/// Micro-F1 over all observations, macro-F1 over positive ones.
CeScores evaluate_planner(const Planner& model,
                          std::span<const PlannerExample> examples,
                          const BeamConfig& beam);

}  // namespace obsgen
