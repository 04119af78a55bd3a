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

#include "obsgen/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "obsgen/errors.hpp"

namespace obsgen {
namespace {

using nlohmann::json;

constexpr std::array<std::string_view, kNumCategories> kCategoryNames = {
    "No Finding",      "Enlarged Cardiomediastinum",
    "Cardiomegaly",    "Lung Lesion",
    "Lung Opacity",    "Edema",
    "Consolidation",   "Pneumonia",
    "Atelectasis",     "Pneumothorax",
    "Pleural Effusion", "Pleural Other",
    "Fracture",        "Support Devices",
};

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool matches_at(std::span<const std::string> tokens, std::size_t pos,
                const std::vector<std::string>& phrase) {
  if (phrase.empty() || pos + phrase.size() > tokens.size()) return false;
  for (std::size_t k = 0; k < phrase.size(); ++k) {
    if (tokens[pos + k] != phrase[k]) return false;
  }
  return true;
}

Tensor read_matrix_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature file " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!row.empty()) rows.push_back(std::move(row));
  }
  try {
    return Tensor::from_rows(rows);
  } catch (const ShapeError&) {
    throw DataError("ragged feature matrix in " + path.string());
  }
}

LabelStatus status_from_json(const json& v, const std::string& record_id) {
  if (v.is_null()) return LabelStatus::kNotMentioned;
  if (v.is_number()) {
    const double x = v.get<double>();
    if (x == 1.0) return LabelStatus::kPresent;
    if (x == 0.0) return LabelStatus::kAbsent;
    if (x == -1.0) return LabelStatus::kUncertain;
    throw DataError("record " + record_id + ": numeric label must be 1, 0 or -1");
  }
  if (v.is_string()) return parse_status(v.get<std::string>());
  throw DataError("record " + record_id + ": label values must be strings");
}

ReportRecord record_from_json(const json& j, const std::filesystem::path& base) {
  ReportRecord rec;
  if (!j.is_object()) throw DataError("record line is not a JSON object");
  if (!j.contains("id")) throw DataError("record without 'id'");
  rec.id = j.at("id").is_string() ? j.at("id").get<std::string>()
                                  : j.at("id").dump();
  if (j.contains("tokens")) {
    const auto& t = j.at("tokens");
    if (t.is_string()) {
      rec.tokens = split_whitespace(t.get<std::string>());
    } else if (t.is_array()) {
      for (const auto& tok : t) rec.tokens.push_back(tok.get<std::string>());
    } else {
      throw DataError("record " + rec.id + ": 'tokens' must be array or string");
    }
    for (auto& tok : rec.tokens) tok = lowercase(tok);
  }
  if (j.contains("labels")) {
    const auto& labels = j.at("labels");
    if (!labels.is_object()) {
      throw DataError("record " + rec.id + ": 'labels' must be an object");
    }
    for (const auto& [name, value] : labels.items()) {
      rec.labels[parse_category(name)] = status_from_json(value, rec.id);
    }
    validate_labels(rec.labels);
  }
  if (j.contains("features") && !j.at("features").is_null()) {
    const auto& f = j.at("features");
    if (f.is_string()) {
      std::filesystem::path p = f.get<std::string>();
      if (p.is_relative()) p = base / p;
      rec.features = read_matrix_file(p);
    } else if (f.is_array()) {
      std::vector<std::vector<double>> rows;
      for (const auto& r : f) rows.push_back(r.get<std::vector<double>>());
      try {
        rec.features = Tensor::from_rows(rows);
      } catch (const ShapeError&) {
        throw DataError("record " + rec.id + ": ragged feature matrix");
      }
    } else {
      throw DataError("record " + rec.id + ": 'features' must be array or path");
    }
  }
  return rec;
}

}  // namespace

std::string_view category_name(Category c) {
  return kCategoryNames.at(static_cast<std::size_t>(c));
}

Category parse_category(std::string_view name) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
    if (kCategoryNames[i] == name) return static_cast<Category>(i);
  }
  throw DataError("unknown category '" + std::string(name) + "'");
}

std::string_view status_name(LabelStatus s) {
  switch (s) {
    case LabelStatus::kPresent: return "present";
    case LabelStatus::kAbsent: return "absent";
    case LabelStatus::kUncertain: return "uncertain";
    case LabelStatus::kNotMentioned: return "not_mentioned";
  }
  return "not_mentioned";
}

LabelStatus parse_status(std::string_view name) {
  const std::string s = lowercase(std::string(name));
  if (s == "present" || s == "positive") return LabelStatus::kPresent;
  if (s == "absent" || s == "negative") return LabelStatus::kAbsent;
  if (s == "uncertain") return LabelStatus::kUncertain;
  if (s == "not_mentioned" || s == "blank" || s.empty()) {
    return LabelStatus::kNotMentioned;
  }
  throw DataError("unknown label status '" + std::string(name) + "'");
}

Observation Observation::from_id(int id) {
  if (id < 0 || id >= kNumObservations) {
    throw DataError("observation id " + std::to_string(id) + " out of range");
  }
  return {static_cast<Category>(id / 2), static_cast<Polarity>(id % 2)};
}

std::string Observation::key() const {
  return std::string(category_name(category)) +
         (polarity == Polarity::kPositive ? "/POS" : "/NEG");
}

Observation Observation::parse(std::string_view key) {
  const auto slash = key.rfind('/');
  if (slash == std::string_view::npos) {
    throw DataError("observation key '" + std::string(key) +
                    "' lacks a /POS or /NEG suffix");
  }
  const std::string_view pol = key.substr(slash + 1);
  Observation obs;
  obs.category = parse_category(key.substr(0, slash));
  if (pol == "POS") {
    obs.polarity = Polarity::kPositive;
  } else if (pol == "NEG") {
    obs.polarity = Polarity::kNegative;
  } else {
    throw DataError("observation key '" + std::string(key) +
                    "' has polarity other than POS/NEG");
  }
  return obs;
}

void validate_labels(const LabelMap& labels) {
  auto it = labels.find(Category::kNoFinding);
  if (it != labels.end() && it->second == LabelStatus::kUncertain) {
    throw DataError("'No Finding' cannot carry status uncertain");
  }
}

std::vector<Observation> labels_to_observations(const LabelMap& labels) {
  validate_labels(labels);
  std::vector<Observation> out;
  for (const auto& [cat, status] : labels) {
    switch (status) {
      case LabelStatus::kPresent:
      case LabelStatus::kUncertain:
        out.push_back({cat, Polarity::kPositive});
        break;
      case LabelStatus::kAbsent:
        out.push_back({cat, Polarity::kNegative});
        break;
      case LabelStatus::kNotMentioned:
        break;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Observation> labels_to_observations(
    const std::map<std::string, std::string>& labels) {
  LabelMap parsed;
  for (const auto& [name, status] : labels) {
    parsed[parse_category(name)] = parse_status(status);
  }
  return labels_to_observations(parsed);
}

void MentionLexicon::add(Observation obs, std::vector<std::string> phrase) {
  if (phrase.empty()) throw DataError("empty mention phrase for " + obs.key());
  for (auto& tok : phrase) tok = lowercase(tok);
  auto& list = phrases_[static_cast<std::size_t>(obs.id())];
  if (std::find(list.begin(), list.end(), phrase) == list.end()) {
    list.push_back(std::move(phrase));
  }
}

std::span<const std::vector<std::string>> MentionLexicon::phrases(
    Observation obs) const {
  return phrases_[static_cast<std::size_t>(obs.id())];
}

bool MentionLexicon::covers_all() const {
  return std::all_of(phrases_.begin(), phrases_.end(),
                     [](const auto& p) { return !p.empty(); });
}

std::optional<std::size_t> find_first_mention(
    std::span<const std::string> tokens,
    std::span<const std::vector<std::string>> phrases) {
  for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
    for (const auto& phrase : phrases) {
      if (matches_at(tokens, pos, phrase)) return pos;
    }
  }
  return std::nullopt;
}

ObservationPlan extract_plan(const ReportRecord& record,
                             const MentionLexicon& lexicon) {
  struct Located {
    Observation obs;
    std::optional<std::size_t> pos;
  };
  std::vector<Located> located;
  for (const Observation obs : labels_to_observations(record.labels)) {
    located.push_back({obs, find_first_mention(record.tokens, lexicon.phrases(obs))});
  }
  std::stable_sort(located.begin(), located.end(),
                   [](const Located& a, const Located& b) {
                     if (a.pos.has_value() != b.pos.has_value()) {
                       return a.pos.has_value();
                     }
                     if (a.pos) {
                       return std::tie(*a.pos, a.obs.category) <
                              std::tie(*b.pos, b.obs.category);
                     }
                     return std::tie(a.obs.polarity, a.obs.category) <
                            std::tie(b.obs.polarity, b.obs.category);
                   });
  ObservationPlan plan;
  for (const auto& l : located) {
    plan.observations.push_back(l.obs);
    plan.first_mention.push_back(l.pos);
  }
  return plan;
}

std::vector<Observation> detect_observations(
    std::span<const std::string> tokens, const MentionLexicon& lexicon) {
  struct Match {
    std::size_t start;
    std::size_t length;
    Observation obs;
  };
  std::vector<Match> matches;
  for (int id = 0; id < kNumObservations; ++id) {
    const Observation obs = Observation::from_id(id);
    for (const auto& phrase : lexicon.phrases(obs)) {
      for (std::size_t pos = 0; pos + phrase.size() <= tokens.size(); ++pos) {
        if (matches_at(tokens, pos, phrase)) {
          matches.push_back({pos, phrase.size(), obs});
        }
      }
    }
  }
  std::sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
    return std::make_tuple(b.length, a.start, a.obs.id()) <
           std::make_tuple(a.length, b.start, b.obs.id());
  });
  std::vector<bool> covered(tokens.size(), false);
  std::array<std::optional<std::pair<std::size_t, Observation>>, kNumCategories>
      earliest;
  for (const auto& m : matches) {
    bool free = true;
    for (std::size_t k = m.start; k < m.start + m.length && free; ++k) {
      free = !covered[k];
    }
    if (!free) continue;
    for (std::size_t k = m.start; k < m.start + m.length; ++k) covered[k] = true;
    auto& slot = earliest[static_cast<std::size_t>(m.obs.category)];
    if (!slot || m.start < slot->first) slot = std::make_pair(m.start, m.obs);
  }

  bool other_positive = false;
  for (int c = 1; c < kNumCategories; ++c) {
    const auto& slot = earliest[static_cast<std::size_t>(c)];
    other_positive = other_positive || (slot && slot->second.positive());
  }
  std::vector<std::pair<std::size_t, Observation>> found;
  for (int c = 1; c < kNumCategories; ++c) {
    if (const auto& slot = earliest[static_cast<std::size_t>(c)]) {
      found.push_back(*slot);
    }
  }
  const auto& nf = earliest[0];
  if (other_positive) {
    found.emplace_back(tokens.size(),
                       Observation{Category::kNoFinding, Polarity::kNegative});
  } else if (nf) {
    found.push_back(*nf);
  }
  std::stable_sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
    return std::tie(a.first, a.second.category) <
           std::tie(b.first, b.second.category);
  });
  std::vector<Observation> out;
  for (const auto& [_, obs] : found) out.push_back(obs);
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens)
    : tokens_{"<pad>", "<bos>", "<eos>", "<unk>"} {
  for (int i = 0; i < kNumReserved; ++i) index_[tokens_[static_cast<std::size_t>(i)]] = i;
  for (const auto& tok : tokens) {
    if (index_.count(tok)) continue;
    index_[tok] = static_cast<int>(tokens_.size());
    tokens_.push_back(tok);
  }
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.count(token) != 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    out.push_back(token(id));
  }
  return out;
}

Vocabulary build_vocab(std::span<const ReportRecord> records, int min_count) {
  if (records.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  std::unordered_map<std::string, int> counts;
  for (const auto& r : records) {
    for (const auto& t : r.tokens) ++counts[t];
  }
  std::vector<std::pair<std::string, int>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens;
  for (auto& [tok, _] : kept) tokens.push_back(tok);
  return Vocabulary(tokens);
}

std::vector<ReportRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open record file " + path.string());
  const auto base = path.parent_path();
  std::vector<ReportRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(record_from_json(json::parse(line), base));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void write_records(const std::filesystem::path& path,
                   std::span<const ReportRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write record file " + path.string());
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["tokens"] = r.tokens;
    nlohmann::ordered_json labels = nlohmann::ordered_json::object();
    for (const auto& [cat, status] : r.labels) {
      labels[std::string(category_name(cat))] = std::string(status_name(status));
    }
    j["labels"] = labels;
    if (!r.features.empty()) {
      nlohmann::ordered_json rows = nlohmann::ordered_json::array();
      for (std::size_t i = 0; i < r.features.rows(); ++i) {
        const auto row = r.features.row(i);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
      }
      j["features"] = rows;
    }
    out << j.dump() << '\n';
  }
}

MentionLexicon read_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("lexicon " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw DataError("lexicon must be a JSON object");
  MentionLexicon lex;
  for (const auto& [key, phrases] : j.items()) {
    const Observation obs = Observation::parse(key);
    if (!phrases.is_array()) {
      throw DataError("lexicon entry " + key + " must be an array");
    }
    for (const auto& p : phrases) {
      if (p.is_string()) {
        lex.add(obs, split_whitespace(p.get<std::string>()));
      } else {
        lex.add(obs, p.get<std::vector<std::string>>());
      }
    }
  }
  return lex;
}

void write_lexicon(const std::filesystem::path& path,
                   const MentionLexicon& lexicon) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (int id = 0; id < kNumObservations; ++id) {
    const Observation obs = Observation::from_id(id);
    const auto phrases = lexicon.phrases(obs);
    if (phrases.empty()) continue;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& p : phrases) arr.push_back(join_tokens(p));
    j[obs.key()] = arr;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write lexicon " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<std::string> default_stopwords() {
  static const char* const kWords =
      "i me my myself we our ours ourselves you you're you've you'll you'd "
      "your yours yourself yourselves he him his himself she she's her hers "
      "herself it it's its itself they them their theirs themselves what "
      "which who whom this that that'll these those am is are was were be "
      "been being have has had having do does did doing a an the and but if "
      "or because as until while of at by for with about against between "
      "into through during before after above below to from up down in out "
      "on off over under again further then once here there when where why "
      "how all any both each few more most other some such no nor not only "
      "own same so than too very s t can will just don don't should "
      "should've now d ll m o re ve y ain aren aren't couldn couldn't didn "
      "didn't doesn doesn't hadn hadn't hasn hasn't haven haven't isn isn't "
      "ma mightn mightn't mustn mustn't needn needn't shan shan't shouldn "
      "shouldn't wasn wasn't weren weren't won won't wouldn wouldn't";
  return split_whitespace(kWords);
}

std::vector<std::string> read_stopwords(const std::filesystem::path& path) {
  if (path.empty()) return default_stopwords();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stopword list " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    for (auto& w : split_whitespace(line)) words.push_back(lowercase(w));
  }
  return words;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace obsgen
