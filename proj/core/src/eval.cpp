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

#include "obsgen/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "obsgen/errors.hpp"

namespace obsgen {
namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(std::span<const std::string> tokens, std::size_t n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

BleuScores bleu(std::span<const std::vector<std::string>> candidates,
                std::span<const std::vector<std::string>> references,
                std::size_t max_n) {
  if (candidates.empty()) throw DataError("bleu: empty candidate set");
  if (candidates.size() != references.size()) {
    throw DataError("bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                    std::to_string(references.size()) + " references");
  }
  if (max_n < 1 || max_n > 4) throw ConfigError("bleu: max_n must be in [1, 4]");

  std::array<std::size_t, 4> matched{};
  std::array<std::size_t, 4> total{};
  BleuScores out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out.candidate_length += candidates[i].size();
    out.reference_length += references[i].size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto cand = count_ngrams(candidates[i], n);
      const auto ref = count_ngrams(references[i], n);
      for (const auto& [gram, c] : cand) {
        auto it = ref.find(gram);
        if (it != ref.end()) matched[n - 1] += std::min(c, it->second);
        total[n - 1] += c;
      }
    }
  }

  const double c = static_cast<double>(out.candidate_length);
  const double r = static_cast<double>(out.reference_length);
  out.brevity_penalty = c == 0.0 ? 0.0 : (c > r ? 1.0 : std::exp(1.0 - r / c));

  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const double p = matched[n - 1] > 0
                         ? static_cast<double>(matched[n - 1]) / static_cast<double>(total[n - 1])
                         : kBleuEpsilon / static_cast<double>(std::max<std::size_t>(total[n - 1], 1));
    out.precision[n - 1] = p;
    log_sum += std::log(p);
    out.bleu[n - 1] = out.brevity_penalty * std::exp(log_sum / static_cast<double>(n));
  }
  return out;
}

std::size_t lcs_length(std::span<const std::string> a,
                       std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::span<const std::string> candidate,
               std::span<const std::string> reference, double beta) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

double rouge_l(std::span<const std::vector<std::string>> candidates,
               std::span<const std::vector<std::string>> references) {
  if (candidates.size() != references.size()) {
    throw DataError("rouge_l: candidate/reference count mismatch");
  }
  if (candidates.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    sum += rouge_l(candidates[i], references[i]);
  }
  return sum / static_cast<double>(candidates.size());
}

CeScores clinical_efficacy(std::span<const std::vector<Observation>> predicted,
                           std::span<const std::vector<Observation>> gold) {
  if (predicted.size() != gold.size()) {
    throw DataError("clinical_efficacy: prediction/gold count mismatch");
  }
  CeScores s;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const std::set<Observation> p(predicted[i].begin(), predicted[i].end());
    const std::set<Observation> g(gold[i].begin(), gold[i].end());
    for (const auto& o : p) {
      auto& c = s.per_observation[static_cast<std::size_t>(o.id())];
      (g.count(o) ? c.tp : c.fp) += 1;
    }
    for (const auto& o : g) {
      if (!p.count(o)) s.per_observation[static_cast<std::size_t>(o.id())].fn += 1;
    }
  }
  for (const auto& c : s.per_observation) {
    s.total.tp += c.tp;
    s.total.fp += c.fp;
    s.total.fn += c.fn;
  }
  const double tp = static_cast<double>(s.total.tp);
  if (s.total.tp + s.total.fp == 0) {
    s.precision_undefined = true;
  } else {
    s.precision = tp / static_cast<double>(s.total.tp + s.total.fp);
  }
  if (s.total.tp + s.total.fn > 0) s.recall = tp / static_cast<double>(s.total.tp + s.total.fn);
  s.f1 = f1_of(s.precision, s.recall);

  double macro = 0.0;
  std::size_t seen = 0;
  for (int id = 0; id < kNumObservations; ++id) {
    if (!Observation::from_id(id).positive()) continue;
    const auto& c = s.per_observation[static_cast<std::size_t>(id)];
    if (c.tp + c.fp + c.fn == 0) continue;
    const double ctp = static_cast<double>(c.tp);
    const double p = c.tp + c.fp ? ctp / static_cast<double>(c.tp + c.fp) : 0.0;
    const double r = c.tp + c.fn ? ctp / static_cast<double>(c.tp + c.fn) : 0.0;
    macro += f1_of(p, r);
    ++seen;
  }
  s.macro_f1_positive = seen ? macro / static_cast<double>(seen) : 0.0;
  return s;
}

CeScores clinical_efficacy(std::span<const std::vector<std::string>> reports,
                           std::span<const std::vector<Observation>> gold,
                           const MentionLexicon& lexicon) {
  std::vector<std::vector<Observation>> predicted;
  predicted.reserve(reports.size());
  for (const auto& r : reports) predicted.push_back(detect_observations(r, lexicon));
  return clinical_efficacy(predicted, gold);
}

MetricReport evaluate_reports(std::span<const std::vector<std::string>> candidates,
                              std::span<const std::vector<std::string>> references,
                              std::span<const std::vector<Observation>> gold,
                              const MentionLexicon& lexicon) {
  MetricReport m;
  m.examples = candidates.size();
  m.bleu = bleu(candidates, references);
  m.rouge_l = rouge_l(candidates, references);
  m.ce = clinical_efficacy(candidates, gold, lexicon);
  return m;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["examples"] = examples;
  for (std::size_t n = 0; n < 4; ++n) j["bleu_" + std::to_string(n + 1)] = bleu.bleu[n];
  j["rouge_l"] = rouge_l;
  j["ce_precision"] = ce.precision;
  j["ce_recall"] = ce.recall;
  j["ce_f1"] = ce.f1;
  j["ce_macro_f1_positive"] = ce.macro_f1_positive;
  j["ce_precision_undefined"] = ce.precision_undefined;
  auto counts = nlohmann::ordered_json::object();
  for (int id = 0; id < kNumObservations; ++id) {
    const auto& c = ce.per_observation[static_cast<std::size_t>(id)];
    if (c.tp + c.fp + c.fn == 0) continue;
    counts[Observation::from_id(id).key()] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
  }
  j["observation_counts"] = std::move(counts);
  return j.dump(2);
}

std::string MetricReport::to_text() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "examples  %zu\n"
                "BLEU-1    %.4f\nBLEU-2    %.4f\nBLEU-3    %.4f\nBLEU-4    %.4f\n"
                "ROUGE-L   %.4f\n"
                "CE P      %.4f%s\nCE R      %.4f\nCE F1     %.4f\nCE macroF1(pos) %.4f\n",
                examples, bleu.bleu[0], bleu.bleu[1], bleu.bleu[2], bleu.bleu[3], rouge_l,
                ce.precision, ce.precision_undefined ? " (undefined)" : "", ce.recall, ce.f1,
                ce.macro_f1_positive);
  return buf;
}

}  // namespace obsgen
