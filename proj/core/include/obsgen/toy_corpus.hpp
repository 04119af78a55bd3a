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
#include <cstdint>
#include <vector>

#include "obsgen/corpus.hpp"

namespace obsgen {

/// One mixture component of the toy label distribution. Each category
/// other than No Finding is independently positive with `p_positive`,
/// negative with `p_negative`, otherwise unmentioned.
struct ToyProfile {
  double weight = 1.0;
  std::array<double, kNumCategories> p_positive{};
  std::array<double, kNumCategories> p_negative{};
};

struct ToyCorpusOptions {
  std::size_t size = 50;
  /// Number of descriptor words ("mild", "left", ...) the templates draw
  /// from; clamped to [2, 24].
  std::size_t vocab_size = 12;
  std::uint64_t seed = 1;
  std::size_t regions = 4;
  std::size_t feature_dim = 24;
  double noise = 0.1;
  /// Fraction of positives labelled uncertain instead of present.
  double uncertain_fraction = 0.2;
  /// Probability that a report's sentences are shuffled out of the
  /// canonical reading order.
  double shuffle_probability = 0.0;
  std::vector<ToyProfile> profiles;  // empty -> default_toy_profiles()
};

std::vector<ToyProfile> default_toy_profiles();

struct ToyCorpus {
  std::vector<ReportRecord> records;
  MentionLexicon lexicon;
};

/// Synthetic labelled reports with template sentences per observation and
/// visual features that linearly encode the labels and the descriptor
/// choice. Every record's labels are recoverable from its text with the
/// returned lexicon. Requires size >= 10.
ToyCorpus make_toy_corpus(const ToyCorpusOptions& options);

/// P(category i positive and category j positive) implied by the options,
/// for i, j in 1..13 (diagonal = marginal). Row/col 0 (No Finding) is left
/// zero because it is derived.
std::array<std::array<double, kNumCategories>, kNumCategories>
expected_positive_cooccurrence(const ToyCorpusOptions& options);

}  // namespace obsgen
