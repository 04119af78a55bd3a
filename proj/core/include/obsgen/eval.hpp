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

#include <array>
#include <span>
#include <string>
#include <vector>

#include "obsgen/corpus.hpp"

namespace obsgen {

inline constexpr double kBleuEpsilon = 1e-9;

struct BleuScores {
  std::array<double, 4> bleu{};       // cumulative BLEU-1..4
  std::array<double, 4> precision{};  // modified n-gram precisions
  double brevity_penalty = 0.0;
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
};

/// Corpus BLEU with one reference per candidate. Zero clipped counts are
/// replaced by epsilon / max(total, 1). Throws DataError on an empty
/// corpus or mismatched sizes.
BleuScores bleu(std::span<const std::vector<std::string>> candidates,
                std::span<const std::vector<std::string>> references,
                std::size_t max_n = 4);

std::size_t lcs_length(std::span<const std::string> a,
                       std::span<const std::string> b);

/// LCS F-measure, (1 + b^2) P R / (R + b^2 P) with b = 1.2.
double rouge_l(std::span<const std::string> candidate,
               std::span<const std::string> reference, double beta = 1.2);
/// Mean sentence-level ROUGE-L.
double rouge_l(std::span<const std::vector<std::string>> candidates,
               std::span<const std::vector<std::string>> references);

struct ObservationCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct CeScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// Nothing was predicted; precision reported as 0.
  bool precision_undefined = false;
  /// Mean F1 over positive observations seen in gold or predictions.
  double macro_f1_positive = 0.0;
  ObservationCounts total;
  std::array<ObservationCounts, kNumObservations> per_observation{};
};

/// Micro P/R/F1 over the 28 observations.
CeScores clinical_efficacy(std::span<const std::vector<Observation>> predicted,
                           std::span<const std::vector<Observation>> gold);
/// Labels each report with detect_observations first.
CeScores clinical_efficacy(std::span<const std::vector<std::string>> reports,
                           std::span<const std::vector<Observation>> gold,
                           const MentionLexicon& lexicon);

struct MetricReport {
  BleuScores bleu;
  double rouge_l = 0.0;
  CeScores ce;
  std::size_t examples = 0;

  std::string to_json() const;
  std::string to_text() const;
};

MetricReport evaluate_reports(std::span<const std::vector<std::string>> candidates,
                              std::span<const std::vector<std::string>> references,
                              std::span<const std::vector<Observation>> gold,
                              const MentionLexicon& lexicon);

}  // namespace obsgen
