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

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>

#include "doctest.h"
#include "obsgen/corpus.hpp"
#include "obsgen/errors.hpp"
#include "obsgen/toy_corpus.hpp"

using namespace obsgen;

namespace {

Observation pos(Category c) { return {c, Polarity::kPositive}; }
Observation neg(Category c) { return {c, Polarity::kNegative}; }

MentionLexicon small_lexicon() {
  MentionLexicon lex;
  lex.add(pos(Category::kCardiomegaly), {"cardiomegaly"});
  lex.add(neg(Category::kCardiomegaly), {"heart", "size", "is", "normal"});
  lex.add(pos(Category::kPleuralEffusion), {"pleural", "effusion"});
  lex.add(neg(Category::kPleuralEffusion), {"no", "pleural", "effusion"});
  lex.add(neg(Category::kPneumothorax), {"no", "pneumothorax"});
  lex.add(pos(Category::kPneumothorax), {"pneumothorax"});
  lex.add(pos(Category::kNoFinding), {"no", "acute", "process"});
  return lex;
}

// Independent plan ordering: earliest position over all phrases, found by
// scanning every (phrase, offset) pair.
std::vector<Observation> brute_force_plan(const ReportRecord& rec,
                                          const MentionLexicon& lex) {
  std::vector<std::tuple<std::size_t, int, int, Observation>> keyed;
  for (Observation obs : labels_to_observations(rec.labels)) {
    std::size_t best = SIZE_MAX;
    for (const auto& ph : lex.phrases(obs)) {
      for (std::size_t i = 0; i + ph.size() <= rec.tokens.size(); ++i) {
        if (std::equal(ph.begin(), ph.end(), rec.tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
          best = std::min(best, i);
        }
      }
    }
    const int missing = best == SIZE_MAX ? 1 : 0;
    keyed.emplace_back(missing ? 0 : best, missing,
                       missing == 0 ? static_cast<int>(obs.category)
                             : static_cast<int>(obs.polarity) * 100 + static_cast<int>(obs.category),
                       obs);
  }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
    return std::get<2>(a) < std::get<2>(b);
  });
  std::vector<Observation> out;
  for (auto& k : keyed) out.push_back(std::get<3>(k));
  return out;
}

}  // namespace

TEST_CASE("observation ids and keys round-trip") {
  for (int id = 0; id < kNumObservations; ++id) {
    const Observation o = Observation::from_id(id);
    CHECK(o.id() == id);
    CHECK(Observation::parse(o.key()) == o);
  }
  CHECK(pos(Category::kCardiomegaly).key() == "Cardiomegaly/POS");
  CHECK_THROWS_AS(Observation::parse("Cardiomegaly"), DataError);
  CHECK_THROWS_AS(Observation::parse("Heart/POS"), DataError);
  CHECK_THROWS_AS(Observation::from_id(kNumObservations), DataError);
}

TEST_CASE("labels map to observations") {
  LabelMap labels{{Category::kCardiomegaly, LabelStatus::kPresent},
                  {Category::kEdema, LabelStatus::kUncertain},
                  {Category::kPneumothorax, LabelStatus::kAbsent},
                  {Category::kFracture, LabelStatus::kNotMentioned},
                  {Category::kNoFinding, LabelStatus::kAbsent}};
  const auto obs = labels_to_observations(labels);
  const std::vector<Observation> want{neg(Category::kNoFinding), pos(Category::kCardiomegaly),
                                      pos(Category::kEdema), neg(Category::kPneumothorax)};
  CHECK(obs == want);

  std::map<std::string, std::string> named{{"No Finding", "present"}};
  CHECK(labels_to_observations(named) == std::vector<Observation>{pos(Category::kNoFinding)});

  LabelMap bad{{Category::kNoFinding, LabelStatus::kUncertain}};
  CHECK_THROWS_AS(labels_to_observations(bad), DataError);
}

TEST_CASE("extract_plan orders by first mention") {
  const auto lex = small_lexicon();
  ReportRecord rec;
  rec.tokens = split_whitespace("there is no pleural effusion . there is cardiomegaly . no pneumothorax .");
  rec.labels = {{Category::kCardiomegaly, LabelStatus::kPresent},
                {Category::kPleuralEffusion, LabelStatus::kAbsent},
                {Category::kPneumothorax, LabelStatus::kAbsent},
                {Category::kNoFinding, LabelStatus::kAbsent}};
  const auto plan = extract_plan(rec, lex);
  const std::vector<Observation> want{neg(Category::kPleuralEffusion), pos(Category::kCardiomegaly),
                                      neg(Category::kPneumothorax), neg(Category::kNoFinding)};
  CHECK(plan.observations == want);
  REQUIRE(plan.first_mention[0].has_value());
  CHECK(*plan.first_mention[0] == 2);
  CHECK_FALSE(plan.first_mention[3].has_value());
}

TEST_CASE("extract_plan matches a brute-force ordering on random reports") {
  const auto lex = small_lexicon();
  const std::vector<std::string> words{"there", "is", "no", "pleural", "effusion", "cardiomegaly",
                                       "pneumothorax", "heart", "size", "normal", ".", "acute", "process"};
  const std::vector<Category> cats{Category::kCardiomegaly, Category::kPleuralEffusion,
                                   Category::kPneumothorax, Category::kNoFinding};
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    ReportRecord rec;
    const int len = std::uniform_int_distribution<int>(0, 25)(rng);
    for (int i = 0; i < len; ++i) {
      rec.tokens.push_back(words[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng)]);
    }
    for (Category c : cats) {
      const int s = std::uniform_int_distribution<int>(0, 3)(rng);
      if (c == Category::kNoFinding && s == 2) continue;
      rec.labels[c] = static_cast<LabelStatus>(s);
    }
    CHECK(extract_plan(rec, lex).observations == brute_force_plan(rec, lex));
  }
}

TEST_CASE("detect_observations prefers the longest match") {
  const auto lex = small_lexicon();
  // "no pleural effusion" must not also count as a positive effusion.
  auto found = detect_observations(split_whitespace("no pleural effusion . no pneumothorax ."), lex);
  CHECK(found == std::vector<Observation>{neg(Category::kPleuralEffusion),
                                          neg(Category::kPneumothorax)});
  found = detect_observations(split_whitespace("small pleural effusion . no acute process ."), lex);
  // A positive finding overrides a stated No Finding.
  CHECK(found == std::vector<Observation>{pos(Category::kPleuralEffusion),
                                          neg(Category::kNoFinding)});
  found = detect_observations(split_whitespace("no acute process ."), lex);
  CHECK(found == std::vector<Observation>{pos(Category::kNoFinding)});
  CHECK(detect_observations({}, lex).empty());
}

TEST_CASE("vocabulary") {
  std::vector<ReportRecord> recs(2);
  recs[0].tokens = split_whitespace("b a a c");
  recs[1].tokens = split_whitespace("a b d");
  const Vocabulary v = build_vocab(recs, 2);
  CHECK(v.size() == Vocabulary::kNumReserved + 2);
  CHECK(v.token(Vocabulary::kNumReserved) == "a");
  CHECK(v.token(Vocabulary::kNumReserved + 1) == "b");
  CHECK(v.id("d") == Vocabulary::kUnk);
  const auto ids = v.encode(recs[1].tokens);
  CHECK(ids == std::vector<int>{4, 5, Vocabulary::kUnk});
  CHECK_THROWS_AS(build_vocab(std::vector<ReportRecord>{}, 1), DataError);
  CHECK(build_vocab(recs, 1).size() == Vocabulary::kNumReserved + 4);
}

TEST_CASE("records and lexicon round-trip through files") {
  ToyCorpusOptions opts;
  opts.size = 12;
  const ToyCorpus toy = make_toy_corpus(opts);
  const auto dir = std::filesystem::temp_directory_path() / "obsgen_test_corpus";
  std::filesystem::create_directories(dir);
  write_records(dir / "r.jsonl", toy.records);
  write_lexicon(dir / "lex.json", toy.lexicon);
  const auto back = read_records(dir / "r.jsonl");
  const auto lex = read_lexicon(dir / "lex.json");
  REQUIRE(back.size() == toy.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == toy.records[i].id);
    CHECK(back[i].tokens == toy.records[i].tokens);
    CHECK(back[i].labels == toy.records[i].labels);
    CHECK(std::ranges::equal(back[i].features.data(), toy.records[i].features.data()));
  }
  for (int id = 0; id < kNumObservations; ++id) {
    const auto a = lex.phrases(Observation::from_id(id));
    const auto b = toy.lexicon.phrases(Observation::from_id(id));
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(read_records(dir / "missing.jsonl"), DataError);
}

TEST_CASE("toy corpus is deterministic and self-consistent") {
  ToyCorpusOptions opts;
  opts.size = 40;
  const ToyCorpus a = make_toy_corpus(opts);
  const ToyCorpus b = make_toy_corpus(opts);
  opts.seed = 2;
  const ToyCorpus c = make_toy_corpus(opts);
  bool differs = false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].tokens == b.records[i].tokens);
    CHECK(std::ranges::equal(a.records[i].features.data(), b.records[i].features.data()));
    differs = differs || a.records[i].tokens != c.records[i].tokens;
    // Labels are recoverable from the text.
    const auto gold = labels_to_observations(a.records[i].labels);
    auto found = detect_observations(a.records[i].tokens, a.lexicon);
    std::sort(found.begin(), found.end());
    CHECK(found == gold);
    CHECK(a.records[i].features.shape() == Shape{opts.regions, opts.feature_dim});
  }
  CHECK(differs);
  CHECK(a.lexicon.covers_all() == false);  // No Finding/NEG has no phrase
  opts.size = 5;
  CHECK_THROWS_AS(make_toy_corpus(opts), ConfigError);
}

TEST_CASE("toy corpus positive co-occurrence follows its profiles") {
  ToyCorpusOptions opts;
  opts.size = 5000;
  opts.seed = 11;
  const ToyCorpus toy = make_toy_corpus(opts);
  const auto expected = expected_positive_cooccurrence(opts);
  double worst = 0.0;
  for (int i = 1; i < kNumCategories; ++i) {
    for (int j = 1; j < kNumCategories; ++j) {
      double hits = 0;
      for (const auto& r : toy.records) {
        auto pi = r.labels.find(static_cast<Category>(i));
        auto pj = r.labels.find(static_cast<Category>(j));
        const auto positive = [&](auto it) {
          return it != r.labels.end() &&
                 (it->second == LabelStatus::kPresent || it->second == LabelStatus::kUncertain);
        };
        hits += positive(pi) && positive(pj);
      }
      worst = std::max(worst, std::abs(hits / 5000.0 - expected[i][j]));
    }
  }
  // Binomial standard error at p = 0.5 and n = 5000 is about 0.007.
  CHECK(worst < 0.03);
}
