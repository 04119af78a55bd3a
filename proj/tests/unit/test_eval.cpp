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
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "obsgen/errors.hpp"
#include "obsgen/eval.hpp"

using namespace obsgen;

namespace {

using Sent = std::vector<std::string>;

Sent S(const char* text) { return split_whitespace(text); }

// Longest common subsequence by trying every subsequence of the shorter
// sequence, longest first.
std::size_t lcs_brute(const Sent& a, const Sent& b) {
  const Sent& s = a.size() <= b.size() ? a : b;
  const Sent& l = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  for (std::uint32_t m = 0; m < (1u << s.size()); ++m) {
    Sent sub;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (m & (1u << i)) sub.push_back(s[i]);
    }
    std::size_t j = 0;
    for (std::size_t i = 0; i < l.size() && j < sub.size(); ++i) j += l[i] == sub[j];
    if (j == sub.size()) best = std::max(best, sub.size());
  }
  return best;
}

Observation O(Category c, bool positive = true) {
  return {c, positive ? Polarity::kPositive : Polarity::kNegative};
}

}  // namespace

TEST_CASE("BLEU of a corpus against itself is one") {
  const std::vector<Sent> x{S("the heart size is normal ."), S("there is no pleural effusion .")};
  const auto b = bleu(x, x);
  for (int n = 0; n < 4; ++n) CHECK(b.bleu[static_cast<std::size_t>(n)] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(b.brevity_penalty == 1.0);
}

TEST_CASE("BLEU matches hand arithmetic") {
  // Clipped matches: 5/6 unigrams, 3/5 bigrams, 1/4 trigrams, 0/3 4-grams.
  const std::vector<Sent> c{S("the cat sat on the mat")};
  const std::vector<Sent> r{S("the cat is on the mat")};
  const auto b = bleu(c, r);
  CHECK(std::abs(b.precision[0] - 5.0 / 6.0) < 1e-12);
  CHECK(std::abs(b.precision[1] - 3.0 / 5.0) < 1e-12);
  CHECK(std::abs(b.precision[2] - 1.0 / 4.0) < 1e-12);
  CHECK(std::abs(b.precision[3] - kBleuEpsilon / 3.0) < 1e-21);
  CHECK(b.brevity_penalty == 1.0);
  CHECK(std::abs(b.bleu[0] - 5.0 / 6.0) < 1e-9);
  CHECK(std::abs(b.bleu[1] - std::sqrt(0.5)) < 1e-9);
  CHECK(std::abs(b.bleu[2] - 0.5) < 1e-9);
  CHECK(std::abs(b.bleu[3] - std::pow(0.125 * kBleuEpsilon / 3.0, 0.25)) < 1e-9);
}

TEST_CASE("BLEU brevity penalty and corpus pooling") {
  const std::vector<Sent> c{S("the cat")};
  const std::vector<Sent> r{S("the cat sat on")};
  const auto b = bleu(c, r);
  CHECK(b.brevity_penalty == doctest::Approx(std::exp(-1.0)));
  CHECK(b.bleu[0] == doctest::Approx(std::exp(-1.0)));

  // Counts are pooled over the corpus, not averaged per sentence.
  const std::vector<Sent> c2{S("a b"), S("c")};
  const std::vector<Sent> r2{S("a b"), S("d")};
  const auto p = bleu(c2, r2, 2);
  CHECK(p.precision[0] == doctest::Approx(2.0 / 3.0));
  CHECK(p.precision[1] == doctest::Approx(1.0));
  CHECK(p.candidate_length == 3);
  CHECK(p.reference_length == 3);

  // Longer candidates carry no penalty.
  const auto longer = bleu(std::vector<Sent>{S("a b c d")}, std::vector<Sent>{S("a b")}, 1);
  CHECK(longer.brevity_penalty == 1.0);
  CHECK(longer.bleu[0] == doctest::Approx(0.5));

  CHECK_THROWS_AS(bleu(std::vector<Sent>{}, std::vector<Sent>{}), DataError);
  CHECK_THROWS_AS(bleu(c, std::vector<Sent>{}), DataError);
}

TEST_CASE("BLEU ignores example order") {
  std::mt19937_64 rng(4);
  const Sent words = S("a b c d e f");
  std::vector<Sent> c, r;
  for (int i = 0; i < 12; ++i) {
    Sent x, y;
    for (int k = 0; k < 7; ++k) {
      x.push_back(words[std::uniform_int_distribution<std::size_t>(0, 5)(rng)]);
      y.push_back(words[std::uniform_int_distribution<std::size_t>(0, 5)(rng)]);
    }
    c.push_back(x);
    r.push_back(y);
  }
  const auto a = bleu(c, r);
  std::vector<std::size_t> idx(c.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Sent> c2, r2;
  for (auto i : idx) {
    c2.push_back(c[i]);
    r2.push_back(r[i]);
  }
  const auto b = bleu(c2, r2);
  for (std::size_t n = 0; n < 4; ++n) CHECK(a.bleu[n] == doctest::Approx(b.bleu[n]).epsilon(1e-14));
}

TEST_CASE("ROUGE-L") {
  CHECK(rouge_l(S("a b c"), S("a b c")) == doctest::Approx(1.0));
  // LCS 2 of 3 both ways: P = R = F = 2/3.
  CHECK(rouge_l(S("a b c"), S("a x c")) == doctest::Approx(2.0 / 3.0));
  CHECK(rouge_l(Sent{}, S("a b")) == 0.0);
  // P = 1, R = 1/2: F = (1 + b^2) R / (R + b^2 P).
  const double b2 = 1.44;
  CHECK(rouge_l(S("a b"), S("a b c d")) == doctest::Approx((1 + b2) * 0.5 / (0.5 + b2)));
  const std::vector<Sent> c{S("a b c"), S("a b")};
  const std::vector<Sent> r{S("a x c"), S("a b")};
  CHECK(rouge_l(c, r) == doctest::Approx((2.0 / 3.0 + 1.0) / 2.0));

  std::mt19937_64 rng(8);
  const Sent words = S("a b c d");
  for (int trial = 0; trial < 200; ++trial) {
    Sent x, y;
    const int lx = std::uniform_int_distribution<int>(0, 9)(rng);
    const int ly = std::uniform_int_distribution<int>(0, 9)(rng);
    for (int i = 0; i < lx; ++i) x.push_back(words[std::uniform_int_distribution<std::size_t>(0, 3)(rng)]);
    for (int i = 0; i < ly; ++i) y.push_back(words[std::uniform_int_distribution<std::size_t>(0, 3)(rng)]);
    CHECK(lcs_length(x, y) == lcs_brute(x, y));
    CHECK(lcs_length(x, y) == lcs_length(y, x));
  }
}

TEST_CASE("clinical efficacy counts") {
  // TP = 3, FP = 1, FN = 2.
  const std::vector<std::vector<Observation>> pred{
      {O(Category::kCardiomegaly), O(Category::kEdema), O(Category::kPneumothorax, false)},
      {O(Category::kFracture)}};
  const std::vector<std::vector<Observation>> gold{
      {O(Category::kCardiomegaly), O(Category::kEdema), O(Category::kPneumothorax, false),
       O(Category::kPleuralEffusion)},
      {O(Category::kAtelectasis)}};
  const auto s = clinical_efficacy(pred, gold);
  CHECK(s.total.tp == 3);
  CHECK(s.total.fp == 1);
  CHECK(s.total.fn == 2);
  CHECK(s.precision == doctest::Approx(0.75));
  CHECK(s.recall == doctest::Approx(0.6));
  CHECK(s.f1 == doctest::Approx(2.0 / 3.0));
  // Positive observations touched: Cardiomegaly 1, Edema 1, Effusion 0,
  // Fracture 0, Atelectasis 0.
  CHECK(s.macro_f1_positive == doctest::Approx(2.0 / 5.0));

  const auto same = clinical_efficacy(gold, gold);
  CHECK(same.f1 == 1.0);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);

  // Order and duplicates inside an example do not matter.
  auto shuffled = pred;
  std::reverse(shuffled[0].begin(), shuffled[0].end());
  shuffled[0].push_back(shuffled[0][0]);
  CHECK(clinical_efficacy(shuffled, gold).f1 == doctest::Approx(s.f1));

  const std::vector<std::vector<Observation>> none(2);
  const auto empty = clinical_efficacy(none, gold);
  CHECK(empty.precision_undefined);
  CHECK(empty.precision == 0.0);
  CHECK(empty.recall == 0.0);
  CHECK(empty.f1 == 0.0);
  CHECK_THROWS_AS(clinical_efficacy(none, std::vector<std::vector<Observation>>(3)), DataError);
}

TEST_CASE("report-level evaluation") {
  MentionLexicon lex;
  lex.add(O(Category::kCardiomegaly), {"cardiomegaly"});
  lex.add(O(Category::kCardiomegaly, false), {"heart", "size", "is", "normal"});
  const std::vector<Sent> refs{S("there is cardiomegaly ."), S("the heart size is normal .")};
  // A stated positive finding implies No Finding/NEG.
  const std::vector<std::vector<Observation>> gold{
      {O(Category::kNoFinding, false), O(Category::kCardiomegaly)},
      {O(Category::kCardiomegaly, false)}};
  const auto m = evaluate_reports(refs, refs, gold, lex);
  CHECK(m.ce.f1 == 1.0);
  CHECK(m.rouge_l == doctest::Approx(1.0));
  CHECK(m.examples == 2);
  const auto j = nlohmann::json::parse(m.to_json());
  CHECK(j.at("bleu_4").get<double>() == m.bleu.bleu[3]);
  CHECK(j.at("ce_f1").get<double>() == 1.0);
  CHECK(m.to_text().find("BLEU-4") != std::string::npos);

  const std::vector<Sent> swapped{refs[1], refs[0]};
  CHECK(evaluate_reports(swapped, refs, gold, lex).ce.f1 == 0.0);
}
