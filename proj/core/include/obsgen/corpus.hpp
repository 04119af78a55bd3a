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
#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "obsgen/tensor.hpp"

namespace obsgen {

/// The 14 label categories, in canonical order. The canonical order breaks
/// every positional tie in this library.
enum class Category : int {
  kNoFinding = 0,
  kEnlargedCardiomediastinum,
  kCardiomegaly,
  kLungLesion,
  kLungOpacity,
  kEdema,
  kConsolidation,
  kPneumonia,
  kAtelectasis,
  kPneumothorax,
  kPleuralEffusion,
  kPleuralOther,
  kFracture,
  kSupportDevices,
};

inline constexpr int kNumCategories = 14;
inline constexpr int kNumObservations = 2 * kNumCategories;

std::string_view category_name(Category c);
/// Throws DataError for names outside the 14 categories.
Category parse_category(std::string_view name);

enum class Polarity : int { kPositive = 0, kNegative = 1 };

enum class LabelStatus { kPresent, kAbsent, kUncertain, kNotMentioned };

std::string_view status_name(LabelStatus s);
LabelStatus parse_status(std::string_view name);

/// A (category, polarity) pair. Dense id = 2 * category + polarity.
struct Observation {
  Category category = Category::kNoFinding;
  Polarity polarity = Polarity::kPositive;

  int id() const {
    return 2 * static_cast<int>(category) + static_cast<int>(polarity);
  }
  static Observation from_id(int id);
  bool positive() const { return polarity == Polarity::kPositive; }

  /// "Cardiomegaly/POS"
  std::string key() const;
  static Observation parse(std::string_view key);

  friend auto operator<=>(const Observation& a, const Observation& b) {
    return a.id() <=> b.id();
  }
  friend bool operator==(const Observation& a, const Observation& b) {
    return a.id() == b.id();
  }
};

using LabelMap = std::map<Category, LabelStatus>;

struct ReportRecord {
  std::string id;
  std::vector<std::string> tokens;
  LabelMap labels;
  Tensor features;  // N x d_v; empty when the record carries none
};

/// Rejects statuses the label scheme forbids (No Finding is never
/// uncertain).
void validate_labels(const LabelMap& labels);

/// present/uncertain -> POS, absent -> NEG, not_mentioned -> omitted.
/// Sorted by observation id.
std::vector<Observation> labels_to_observations(const LabelMap& labels);
/// Same, from raw category/status names; unknown names are schema errors.
std::vector<Observation> labels_to_observations(
    const std::map<std::string, std::string>& labels);

/// Observation -> mention phrases (each a lowercase token sequence).
class MentionLexicon {
 public:
  void add(Observation obs, std::vector<std::string> phrase);
  std::span<const std::vector<std::string>> phrases(Observation obs) const;
  bool covers_all() const;

 private:
  std::array<std::vector<std::vector<std::string>>, kNumObservations> phrases_;
};

/// Earliest token index at which any phrase occurs contiguously.
std::optional<std::size_t> find_first_mention(
    std::span<const std::string> tokens,
    std::span<const std::vector<std::string>> phrases);

struct ObservationPlan {
  std::vector<Observation> observations;
  /// First-mention token index per observation; nullopt when unmatched.
  std::vector<std::optional<std::size_t>> first_mention;

  std::size_t size() const { return observations.size(); }
  bool empty() const { return observations.empty(); }
};

/// Orders the record's labelled observations by first mention. Ties break
/// by canonical category order; unmatched observations follow all matched
/// ones, positives before negatives, then category order.
ObservationPlan extract_plan(const ReportRecord& record,
                             const MentionLexicon& lexicon);

/// Rule-based labeller: finds observations mentioned in free text.
/// Phrases match longest-first without overlapping; per category the
/// earliest surviving mention decides polarity. No Finding is NEG whenever
/// another category is detected positive. Result is in mention order.
std::vector<Observation> detect_observations(
    std::span<const std::string> tokens, const MentionLexicon& lexicon);

/// Token <-> id map with PAD/BOS/EOS/UNK reserved at 0..3.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumReserved = 4;

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& tokens);

  int id(const std::string& token) const;
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Tokens seen at least `min_count` times, by descending count then
/// lexicographically, after the reserved ids.
Vocabulary build_vocab(std::span<const ReportRecord> records, int min_count);

inline constexpr std::string_view kSentenceBoundary = ".";

// ---- files -----------------------------------------------------------

/// One JSON object per line: id, tokens (array or whitespace string),
/// labels (category -> status), features (array of rows, or a path to a
/// whitespace matrix file relative to the record file).
std::vector<ReportRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path,
                   std::span<const ReportRecord> records);

/// JSON object: observation key -> array of phrases (strings or arrays).
MentionLexicon read_lexicon(const std::filesystem::path& path);
void write_lexicon(const std::filesystem::path& path,
                   const MentionLexicon& lexicon);

std::vector<std::string> default_stopwords();
/// One word per line; '#' starts a comment. Empty path -> defaults.
std::vector<std::string> read_stopwords(const std::filesystem::path& path);

std::vector<std::string> split_whitespace(std::string_view text);
std::string join_tokens(std::span<const std::string> tokens);

}  // namespace obsgen
