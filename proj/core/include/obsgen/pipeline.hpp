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
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "obsgen/corpus.hpp"
#include "obsgen/decoding.hpp"
#include "obsgen/eval.hpp"
#include "obsgen/generator.hpp"
#include "obsgen/miner.hpp"
#include "obsgen/nn.hpp"
#include "obsgen/obsgraph.hpp"
#include "obsgen/optim.hpp"
#include "obsgen/planner.hpp"

namespace obsgen {

/// Overrides PipelineConfig::output_dir when set.
inline constexpr const char* kOutputDirEnv = "OBSGEN_OUTPUT_DIR";

struct DataConfig {
  /// Empty train path: synthesize the toy corpus instead.
  std::filesystem::path train;
  std::filesystem::path test;
  std::filesystem::path lexicon;
  std::size_t min_count = 1;
  /// Taken from the end of the training records for planner selection.
  std::size_t validation_size = 0;
  std::size_t toy_size = 250;
  std::size_t toy_test_size = 50;
  std::uint64_t toy_seed = 1;
  std::size_t toy_vocab_size = 12;
  double toy_noise = 0.1;
};

struct PipelineConfig {
  std::string preset = "toy";
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "obsgen-out";
  DataConfig data;
  MinerConfig miner;
  LayerConfig layer;
  std::size_t max_regions = 64;
  PlannerConfig planner;      // layer/feature_dim/max_regions filled at build
  GeneratorConfig generator;  // same
  TrainConfig planner_train;
  TrainConfig generator_train;
  BeamConfig beam;
  std::vector<std::size_t> sweep_k{2, 8, 16};
  std::vector<std::uint64_t> sweep_seeds{1, 2, 3};

  /// "toy", "iu" or "mimic"; ConfigError otherwise.
  static PipelineConfig from_preset(std::string_view name);

  /// Applies `[section]` / `key = value` text on top of this config.
  /// Relative paths resolve against `base_dir`. Unknown keys are errors.
  void apply_ini(std::string_view text, const std::filesystem::path& base_dir = {});
  /// Every key, in a fixed order; the manifest hashes this text.
  std::string to_ini() const;
  void validate() const;

  PlannerConfig planner_config(std::size_t feature_dim) const;
  GeneratorConfig generator_config(std::size_t feature_dim) const;
};

/// Preset named by the file's `run.preset` key (default toy), then the
/// file on top; then the output-dir environment override.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
/// Preset plus the environment override.
PipelineConfig preset_pipeline_config(std::string_view preset);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

struct Dataset {
  std::vector<ReportRecord> train;
  std::vector<ReportRecord> validation;
  std::vector<ReportRecord> test;
  MentionLexicon lexicon;
};

Dataset load_dataset(const PipelineConfig& cfg);

std::vector<PlannerExample> planner_examples(std::span<const ReportRecord> records,
                                             const MentionLexicon& lexicon);
std::vector<GeneratorExample> generator_examples(
    std::span<const ReportRecord> records,
    std::span<const std::vector<Observation>> plans, const MinedNgrams& mined,
    bool use_plan = true);

/// Gold plans (training) or planner predictions (inference). An empty
/// predicted plan falls back to No Finding/POS so a graph can be built.
std::vector<std::vector<Observation>> gold_plans(std::span<const ReportRecord> records,
                                                 const MentionLexicon& lexicon);
std::vector<std::vector<Observation>> predicted_plans(std::span<const ReportRecord> records,
                                                      const Planner& planner,
                                                      const BeamConfig& beam);

struct Prediction {
  std::string id;
  std::vector<Observation> plan;
  std::vector<std::string> tokens;
};

std::vector<Prediction> generate_reports(std::span<const ReportRecord> records,
                                         const Planner* planner,
                                         const Generator& generator,
                                         const MinedNgrams& mined,
                                         const BeamConfig& beam);

void write_predictions(const std::filesystem::path& path,
                       std::span<const Prediction> predictions);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

/// Scores predictions against gold records matched by id.
MetricReport evaluate_predictions(std::span<const Prediction> predictions,
                                  std::span<const ReportRecord> gold,
                                  const MentionLexicon& lexicon);

Planner train_planner_stage(const PipelineConfig& cfg, const Dataset& data,
                            PlannerTraining* history = nullptr);
Generator train_generator_stage(const PipelineConfig& cfg, const Dataset& data,
                                const MinedNgrams& mined,
                                std::span<const std::vector<Observation>> train_plans,
                                std::vector<GeneratorEpoch>* history = nullptr);

struct PipelineResult {
  MetricReport metrics;
  std::filesystem::path output_dir;
  std::vector<std::filesystem::path> artifacts;
};

/// mine -> graphs -> planner -> generator -> generate -> evaluate, writing
/// every artifact plus manifest.json to cfg.output_dir. Stage failures are
/// rethrown with the stage name prepended.
PipelineResult run_pipeline(const PipelineConfig& cfg);

struct SweepRow {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  MetricReport metrics;
};

/// Held-out metrics per (K, seed). Mining runs once at the largest K; each
/// seed trains one planner shared across K.
std::vector<SweepRow> sweep_k(const PipelineConfig& cfg, std::span<const std::size_t> ks,
                              std::span<const std::uint64_t> seeds);
std::string sweep_table(std::span<const SweepRow> rows);

}  // namespace obsgen
