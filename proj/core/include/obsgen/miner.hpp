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
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "obsgen/corpus.hpp"

namespace obsgen {

/// Unit and unordered-pair counts with a shared total, for
/// PMI(a, b) = log p(a, b) / (p(a) p(b)) with p(x) = count / total and
/// add-delta smoothing on the pair count.
class PmiTable {
 public:
  explicit PmiTable(double smoothing = 0.5) : smoothing_(smoothing) {}

  void add_unit(const std::string& unit, std::uint64_t n = 1);
  void add_pair(const std::string& a, const std::string& b, std::uint64_t n = 1);
  void add_total(std::uint64_t n) { total_ += n; }
  /// Adds another table's counts (shard reduction).
  void merge(const PmiTable& other);

  std::uint64_t unit_count(const std::string& unit) const;
  std::uint64_t pair_count(const std::string& a, const std::string& b) const;
  std::uint64_t total() const { return total_; }
  double smoothing() const { return smoothing_; }
  std::size_t distinct_units() const { return units_.size(); }

 private:
  static std::string pair_key(const std::string& a, const std::string& b);

  double smoothing_;
  std::uint64_t total_ = 0;
  std::unordered_map<std::string, std::uint64_t> units_;
  std::unordered_map<std::string, std::uint64_t> pairs_;
};

/// Throws DataError when either unit has never been counted.
double pmi(const std::string& a, const std::string& b, const PmiTable& table);

struct NgramCandidate {
  std::vector<std::string> tokens;
  std::uint64_t frequency = 0;
  double score = 0.0;
  /// Non-stopword tokens; filled by top_k.
  std::vector<std::string> node_tokens;

  std::string text() const { return join_tokens(tokens); }
};

inline constexpr std::size_t kMaxNgramLength = 4;

struct MinerConfig {
  std::size_t top_k = 30;
  double merge_threshold = 0.0;
  /// Associations scoring below this are not selected.
  double association_floor = 0.0;
  /// Candidates seen fewer times in the corpus are not associated.
  std::uint64_t min_frequency = 2;
  double smoothing = 0.5;
  std::filesystem::path stopwords_path;  // empty -> built-in list
};

/// Splits on sentence-boundary tokens; boundaries themselves are dropped.
std::vector<std::vector<std::string>> split_sentences(
    std::span<const std::string> tokens);

/// Unit and adjacent-pair counts over pre-segmented sentences.
PmiTable count_adjacency(
    const std::vector<std::vector<std::string>>& sentences, double smoothing);

/// Every contiguous n-gram (n <= 4) inside sentences, with its count.
std::unordered_map<std::string, std::uint64_t> count_substrings(
    std::span<const ReportRecord> records);

/// Greedy PMI merging of adjacent units inside each sentence: each round
/// recounts the current segmentation and merges non-overlapping adjacent
/// pairs, highest PMI first, while PMI >= merge_threshold and the merged
/// unit has at most four tokens. Returns every unit ever formed, with its
/// corpus substring frequency, sorted by text.
std::vector<NgramCandidate> segment_ngrams(std::span<const ReportRecord> records,
                                           const MinerConfig& cfg);

/// Report-level co-occurrence of observations (from labels) and candidates.
/// Units are keyed "obs:<key>" and "ngram:<text>"; total = report count.
PmiTable count_associations(std::span<const ReportRecord> records,
                            std::span<const NgramCandidate> candidates,
                            double smoothing);

/// PMI(observation, candidate) for every candidate, sorted by descending
/// score (ties: higher frequency, then text). Empty when the observation
/// never occurs.
std::vector<NgramCandidate> associate(Observation observation,
                                      std::span<const NgramCandidate> candidates,
                                      const PmiTable& table);

/// First K candidates that are not made only of stopwords, with their
/// non-stopword tokens attached. Warns when fewer than K survive.
std::vector<NgramCandidate> top_k(std::span<const NgramCandidate> scored,
                                  std::size_t k,
                                  const std::unordered_set<std::string>& stopwords);

/// The mining artifact: top-K n-grams per observation.
struct MinedNgrams {
  std::size_t top_k = 0;
  std::array<std::vector<NgramCandidate>, kNumObservations> per_observation;

  const std::vector<NgramCandidate>& for_observation(Observation obs) const {
    return per_observation[static_cast<std::size_t>(obs.id())];
  }
  bool has(Observation obs) const { return !for_observation(obs).empty(); }
  /// Copy keeping only the first k n-grams per observation.
  MinedNgrams truncated(std::size_t k) const;
};

MinedNgrams mine_ngrams(std::span<const ReportRecord> records,
                        const MinerConfig& cfg);

void write_mined(const std::filesystem::path& path, const MinedNgrams& mined);
MinedNgrams read_mined(const std::filesystem::path& path);
std::string mined_to_json(const MinedNgrams& mined);

}  // namespace obsgen
