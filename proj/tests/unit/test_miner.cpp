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

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "doctest.h"
#include "obsgen/errors.hpp"
#include "obsgen/miner.hpp"
#include "obsgen/toy_corpus.hpp"
#include "pmi_oracle.hpp"

using namespace obsgen;
using obsgen::testing::AdjacencyOracle;

namespace {

ReportRecord record(const std::string& text, LabelMap labels = {}) {
  ReportRecord r;
  r.tokens = split_whitespace(text);
  r.labels = std::move(labels);
  return r;
}

std::vector<ReportRecord> random_corpus(std::mt19937_64& rng, std::size_t n_reports) {
  const std::vector<std::string> words{"the", "heart", "is", "enlarged", "pleural",
                                       "effusion", "no", "left", "small", "lungs"};
  std::vector<ReportRecord> out;
  for (std::size_t r = 0; r < n_reports; ++r) {
    std::string text;
    const int len = std::uniform_int_distribution<int>(1, 14)(rng);
    for (int i = 0; i < len; ++i) {
      text += (std::uniform_int_distribution<int>(0, 5)(rng) == 0)
                  ? ". "
                  : words[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng)] + " ";
    }
    ReportRecord rec = record(text);
    rec.labels[Category::kCardiomegaly] =
        std::uniform_int_distribution<int>(0, 1)(rng) ? LabelStatus::kPresent : LabelStatus::kAbsent;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

TEST_CASE("pmi on hand-counted tables") {
  // "a b" repeated: p(a) = p(b) = p(a, b) = 1/2.
  std::vector<std::vector<std::string>> sents(10, {"a", "b"});
  const PmiTable raw = count_adjacency(sents, 0.0);
  CHECK(raw.unit_count("a") == 10);
  CHECK(raw.pair_count("b", "a") == 10);
  CHECK(raw.total() == 20);
  CHECK(pmi("a", "b", raw) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const PmiTable smoothed = count_adjacency(sents, 0.5);
  CHECK(pmi("a", "b", smoothed) == doctest::Approx(std::log(2.1)).epsilon(1e-15));

  PmiTable indep(0.0);
  indep.add_unit("x", 10);
  indep.add_unit("y", 10);
  indep.add_pair("x", "y", 1);
  indep.add_total(100);
  CHECK(std::abs(pmi("x", "y", indep)) < 1e-15);
  CHECK(pmi("x", "y", indep) == pmi("y", "x", indep));

  PmiTable never(0.5);
  never.add_unit("x", 50);
  never.add_unit("y", 50);
  never.add_total(100);
  const double v = pmi("x", "y", never);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(std::log(0.5 / 100 / 0.25)));
  CHECK(v < -3.0);
  CHECK_THROWS_AS(pmi("x", "z", never), DataError);
}

TEST_CASE("table merge equals counting the union") {
  std::mt19937_64 rng(3);
  auto a = random_corpus(rng, 10);
  auto b = random_corpus(rng, 10);
  std::vector<std::vector<std::string>> sa, sb, all;
  for (auto& r : a) for (auto& s : split_sentences(r.tokens)) { sa.push_back(s); all.push_back(s); }
  for (auto& r : b) for (auto& s : split_sentences(r.tokens)) { sb.push_back(s); all.push_back(s); }
  PmiTable merged = count_adjacency(sa, 0.5);
  merged.merge(count_adjacency(sb, 0.5));
  const PmiTable whole = count_adjacency(all, 0.5);
  CHECK(merged.total() == whole.total());
  AdjacencyOracle o(all);
  for (const auto& [u, c] : o.unit) {
    CHECK(merged.unit_count(u) == whole.unit_count(u));
    for (const auto& [w, _] : o.unit) CHECK(merged.pair_count(u, w) == whole.pair_count(u, w));
  }
}

TEST_CASE("adjacency counts and pmi match a brute-force recount") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto corpus = random_corpus(rng, 8);
    std::vector<std::vector<std::string>> sents;
    for (const auto& r : corpus) {
      for (auto& s : obsgen::testing::oracle_sentences(r.tokens)) sents.push_back(s);
    }
    const PmiTable table = count_adjacency(sents, 0.5);
    const AdjacencyOracle oracle(sents);
    CHECK(static_cast<double>(table.total()) == oracle.total);
    for (const auto& [a, ca] : oracle.unit) {
      CHECK(static_cast<double>(table.unit_count(a)) == ca);
      for (const auto& [b, cb] : oracle.unit) {
        CHECK(static_cast<double>(table.pair_count(a, b)) == oracle.pair_count(a, b));
        CHECK(std::abs(pmi(a, b, table) - oracle.pmi(a, b, 0.5)) < 1e-12);
        CHECK(pmi(a, b, table) == pmi(b, a, table));
      }
    }
  }
}

TEST_CASE("substring counts match a brute-force recount") {
  std::mt19937_64 rng(5);
  const auto corpus = random_corpus(rng, 30);
  const auto counts = count_substrings(corpus);
  const auto oracle = obsgen::testing::oracle_substrings(corpus);
  CHECK(counts.size() == oracle.size());
  for (const auto& [tokens, c] : oracle) {
    auto it = counts.find(join_tokens(tokens));
    REQUIRE(it != counts.end());
    CHECK(static_cast<double>(it->second) == c);
  }
}

TEST_CASE("segmentation") {
  std::vector<ReportRecord> corpus;
  for (int i = 0; i < 6; ++i) {
    corpus.push_back(record("there is a small pleural effusion . the heart is enlarged ."));
    corpus.push_back(record("pleural effusion is seen . no pneumothorax ."));
  }
  MinerConfig cfg;
  cfg.merge_threshold = 1.0;
  const auto cands = segment_ngrams(corpus, cfg);
  const auto oracle = obsgen::testing::oracle_substrings(corpus);
  bool found = false;
  for (const auto& c : cands) {
    CHECK(c.tokens.size() >= 1);
    CHECK(c.tokens.size() <= kMaxNgramLength);
    REQUIRE(oracle.count(c.tokens) == 1);
    CHECK(static_cast<double>(c.frequency) == oracle.at(c.tokens));
    found = found || c.text() == "pleural effusion";
  }
  CHECK(found);
  CHECK(std::is_sorted(cands.begin(), cands.end(),
                       [](const auto& a, const auto& b) { return a.text() < b.text(); }));

  cfg.merge_threshold = std::numeric_limits<double>::infinity();
  for (const auto& c : segment_ngrams(corpus, cfg)) CHECK(c.tokens.size() == 1);

  // Low thresholds still stop at four tokens.
  cfg.merge_threshold = -1e9;
  std::size_t longest = 0;
  for (const auto& c : segment_ngrams(corpus, cfg)) longest = std::max(longest, c.tokens.size());
  CHECK(longest == kMaxNgramLength);
}

TEST_CASE("association ranks an observation-specific n-gram first") {
  const LabelMap cardio{{Category::kCardiomegaly, LabelStatus::kPresent},
                        {Category::kNoFinding, LabelStatus::kAbsent}};
  const LabelMap normal{{Category::kCardiomegaly, LabelStatus::kAbsent},
                        {Category::kNoFinding, LabelStatus::kPresent}};
  std::vector<ReportRecord> corpus;
  for (int i = 0; i < 5; ++i) {
    corpus.push_back(record("the heart is enlarged . lungs are clear .", cardio));
    corpus.push_back(record("the heart size is normal . lungs are clear .", normal));
  }
  MinerConfig cfg;
  cfg.top_k = 3;
  const MinedNgrams mined = mine_ngrams(corpus, cfg);
  const auto& list = mined.for_observation({Category::kCardiomegaly, Polarity::kPositive});
  REQUIRE_FALSE(list.empty());
  CHECK(list.front().text().find("enlarged") != std::string::npos);
  CHECK(list.size() <= 3);
  for (const auto& c : list) {
    CHECK_FALSE(c.node_tokens.empty());
    for (const auto& t : c.node_tokens) CHECK(t != "the");
  }
  CHECK_FALSE(mined.has({Category::kEdema, Polarity::kPositive}));

  // An n-gram present in every report carries no information.
  std::vector<NgramCandidate> cands(1);
  cands[0].tokens = {"lungs", "are", "clear"};
  cands[0].frequency = 10;
  PmiTable table = count_associations(corpus, cands, 0.0);
  const auto scored = associate({Category::kCardiomegaly, Polarity::kPositive}, cands, table);
  REQUIRE(scored.size() == 1);
  CHECK(std::abs(scored[0].score) < 1e-15);
}

TEST_CASE("stopword-only n-grams are skipped") {
  std::vector<NgramCandidate> scored(3);
  scored[0].tokens = {"there", "is"};
  scored[1].tokens = {"the", "heart"};
  scored[2].tokens = {"effusion"};
  const std::unordered_set<std::string> stop{"there", "is", "the"};
  const auto kept = top_k(scored, 2, stop);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].node_tokens == std::vector<std::string>{"heart"});
  CHECK(kept[1].text() == "effusion");
}

TEST_CASE("top-K associations match a brute-force recount on a toy corpus") {
  ToyCorpusOptions opts;
  opts.size = 40;
  const auto toy = make_toy_corpus(opts);
  MinerConfig cfg;
  cfg.top_k = 8;
  std::vector<NgramCandidate> cands;
  for (auto& c : segment_ngrams(toy.records, cfg)) {
    if (c.frequency >= cfg.min_frequency) cands.push_back(c);
  }
  std::vector<std::pair<std::vector<std::string>, double>> plain;
  for (const auto& c : cands) plain.emplace_back(c.tokens, static_cast<double>(c.frequency));
  const MinedNgrams mined = mine_ngrams(toy.records, cfg);
  const auto stop_list = default_stopwords();
  const std::unordered_set<std::string> stop(stop_list.begin(), stop_list.end());
  for (int id = 0; id < kNumObservations; ++id) {
    const Observation obs = Observation::from_id(id);
    auto oracle = obsgen::testing::oracle_associate(toy.records, obs, plain, cfg.smoothing);
    std::erase_if(oracle, [&](const auto& a) {
      return std::all_of(a.tokens.begin(), a.tokens.end(), [&](const auto& t) { return stop.count(t) > 0; });
    });
    if (oracle.size() > cfg.top_k) oracle.resize(cfg.top_k);
    const auto& got = mined.for_observation(obs);
    REQUIRE(got.size() == oracle.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].tokens == oracle[i].tokens);
      CHECK(std::abs(got[i].score - oracle[i].score) < 1e-12);
    }
  }
}

TEST_CASE("mining ignores record order and round-trips through a file") {
  ToyCorpusOptions opts;
  opts.size = 30;
  auto records = make_toy_corpus(opts).records;
  MinerConfig cfg;
  cfg.top_k = 5;
  const auto a = mine_ngrams(records, cfg);
  std::mt19937_64 rng(9);
  std::shuffle(records.begin(), records.end(), rng);
  const auto b = mine_ngrams(records, cfg);
  CHECK(mined_to_json(a) == mined_to_json(b));

  const auto path = std::filesystem::temp_directory_path() / "obsgen_test_mined.json";
  write_mined(path, a);
  const auto back = read_mined(path);
  CHECK(mined_to_json(back) == mined_to_json(a));
  std::filesystem::remove(path);

  const auto t = a.truncated(2);
  CHECK(t.top_k == 2);
  for (const auto& list : t.per_observation) CHECK(list.size() <= 2);

  cfg.top_k = 0;
  CHECK_THROWS_AS(mine_ngrams(records, cfg), ConfigError);
  cfg.top_k = 3;
  CHECK_THROWS_AS(mine_ngrams(std::vector<ReportRecord>{}, cfg), DataError);
}
