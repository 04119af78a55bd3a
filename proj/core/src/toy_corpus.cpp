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

#include "obsgen/toy_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <string_view>

#include "obsgen/errors.hpp"

namespace obsgen {
namespace {

constexpr std::array<std::string_view, 24> kDescriptors = {
    "mild",   "moderate", "severe",  "small",   "large",    "trace",
    "subtle", "patchy",   "focal",   "diffuse", "left",     "right",
    "bilateral", "basilar", "apical", "streaky", "minimal", "marked",
    "new",    "stable",   "chronic", "acute",   "increased", "decreased"};

constexpr std::size_t kVariantsPerObservation = 3;

struct Template {
  std::string_view sentence;  // "{d}" marks the descriptor slot
  std::string_view mention;
};

// Positive and negative sentence per category; No Finding has no negative
// sentence (it is implied by any positive finding).
constexpr std::array<std::array<Template, 2>, kNumCategories> kTemplates = {{
    {{{"no acute cardiopulmonary process .", "no acute cardiopulmonary process"},
      {"", ""}}},
    {{{"{d} widening of the mediastinum .", "widening of the mediastinum"},
      {"the mediastinal contours are normal .", "mediastinal contours are normal"}}},
    {{{"there is {d} cardiomegaly .", "cardiomegaly"},
      {"the heart size is normal .", "heart size is normal"}}},
    {{{"a {d} pulmonary nodule is seen .", "pulmonary nodule"},
      {"no pulmonary nodules are identified .", "no pulmonary nodules"}}},
    {{{"there is {d} opacity in the lungs .", "opacity in the lungs"},
      {"the lungs are clear .", "lungs are clear"}}},
    {{{"{d} pulmonary edema is present .", "pulmonary edema is present"},
      {"there is no pulmonary edema .", "no pulmonary edema"}}},
    {{{"{d} consolidation is noted .", "consolidation is noted"},
      {"there is no focal consolidation .", "no focal consolidation"}}},
    {{{"findings may reflect {d} pneumonia .", "pneumonia"},
      {"there is no evidence of pneumonia .", "no evidence of pneumonia"}}},
    {{{"{d} atelectasis is seen at the bases .", "atelectasis"},
      {"there is no atelectasis .", "no atelectasis"}}},
    {{{"there is a {d} pneumothorax .", "pneumothorax"},
      {"there is no pneumothorax .", "no pneumothorax"}}},
    {{{"there is a {d} pleural effusion .", "pleural effusion"},
      {"there is no pleural effusion .", "no pleural effusion"}}},
    {{{"{d} pleural thickening is present .", "pleural thickening"},
      {"no pleural thickening is seen .", "no pleural thickening"}}},
    {{{"there is a {d} rib fracture .", "rib fracture"},
      {"no acute fracture is identified .", "no acute fracture"}}},
    {{{"a {d} support line is in place .", "support line"},
      {"no support devices are present .", "no support devices"}}},
}};

// Reading order of findings in a report: devices, mediastinum and heart,
// lungs, pleura, bones, then the overall impression.
constexpr std::array<Category, kNumCategories> kReportOrder = {
    Category::kSupportDevices, Category::kEnlargedCardiomediastinum,
    Category::kCardiomegaly,   Category::kLungOpacity,
    Category::kLungLesion,     Category::kConsolidation,
    Category::kPneumonia,      Category::kEdema,
    Category::kAtelectasis,    Category::kPneumothorax,
    Category::kPleuralEffusion, Category::kPleuralOther,
    Category::kFracture,       Category::kNoFinding};

ToyProfile make_profile(double weight,
                        std::initializer_list<std::pair<Category, double>> pos,
                        std::initializer_list<std::pair<Category, double>> neg,
                        double base_pos, double base_neg) {
  ToyProfile p;
  p.weight = weight;
  p.p_positive.fill(base_pos);
  p.p_negative.fill(base_neg);
  for (auto [c, v] : pos) p.p_positive[static_cast<std::size_t>(c)] = v;
  for (auto [c, v] : neg) p.p_negative[static_cast<std::size_t>(c)] = v;
  p.p_positive[0] = 0.0;
  p.p_negative[0] = 0.0;
  return p;
}

std::vector<std::string> render(std::string_view sentence,
                                std::string_view descriptor) {
  std::vector<std::string> out;
  for (auto& tok : split_whitespace(sentence)) {
    if (tok == "{d}") {
      out.emplace_back(descriptor);
    } else {
      out.push_back(std::move(tok));
    }
  }
  return out;
}

std::vector<double> gaussian_vector(std::mt19937_64& rng, std::size_t dim,
                                    double scale) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(dim);
  for (double& x : v) x = n(rng);
  return v;
}

}  // namespace

std::vector<ToyProfile> default_toy_profiles() {
  using C = Category;
  return {
      make_profile(0.30, {},
                   {{C::kCardiomegaly, 0.6}, {C::kPleuralEffusion, 0.6},
                    {C::kPneumothorax, 0.6}, {C::kLungOpacity, 0.5},
                    {C::kConsolidation, 0.4}},
                   0.02, 0.1),
      make_profile(0.25,
                   {{C::kCardiomegaly, 0.8}, {C::kEnlargedCardiomediastinum, 0.5},
                    {C::kEdema, 0.5}, {C::kPleuralEffusion, 0.5}},
                   {{C::kPneumothorax, 0.6}, {C::kConsolidation, 0.3}},
                   0.03, 0.1),
      make_profile(0.25,
                   {{C::kLungOpacity, 0.7}, {C::kConsolidation, 0.4},
                    {C::kPneumonia, 0.4}, {C::kAtelectasis, 0.5}},
                   {{C::kCardiomegaly, 0.5}, {C::kPneumothorax, 0.5},
                    {C::kPleuralEffusion, 0.3}},
                   0.03, 0.1),
      make_profile(0.20,
                   {{C::kSupportDevices, 0.8}, {C::kFracture, 0.4},
                    {C::kPneumothorax, 0.3}, {C::kPleuralOther, 0.2},
                    {C::kLungLesion, 0.2}},
                   {{C::kPleuralEffusion, 0.4}, {C::kLungOpacity, 0.3}},
                   0.03, 0.1),
  };
}

ToyCorpus make_toy_corpus(const ToyCorpusOptions& options) {
  if (options.size < 10) throw ConfigError("toy corpus size must be >= 10");
  if (options.regions == 0 || options.feature_dim == 0) {
    throw ConfigError("toy corpus needs at least one region and feature");
  }
  const auto profiles =
      options.profiles.empty() ? default_toy_profiles() : options.profiles;
  const std::size_t n_desc =
      std::clamp<std::size_t>(options.vocab_size, 2, kDescriptors.size());
  std::mt19937_64 rng(options.seed);

  // Per-observation descriptor choices and feature prototypes.
  std::array<std::vector<std::string_view>, kNumObservations> descriptors;
  std::vector<std::vector<double>> obs_proto(kNumObservations);
  std::vector<std::vector<std::vector<double>>> variant_proto(kNumObservations);
  const double unit = 1.0 / std::sqrt(static_cast<double>(options.feature_dim));
  for (int id = 0; id < kNumObservations; ++id) {
    std::vector<std::string_view> pool(kDescriptors.begin(),
                                       kDescriptors.begin() + static_cast<std::ptrdiff_t>(n_desc));
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min(kVariantsPerObservation, pool.size()));
    descriptors[static_cast<std::size_t>(id)] = pool;
    obs_proto[static_cast<std::size_t>(id)] =
        gaussian_vector(rng, options.feature_dim, 2.0 * unit);
    for (std::size_t v = 0; v < pool.size(); ++v) {
      variant_proto[static_cast<std::size_t>(id)].push_back(
          gaussian_vector(rng, options.feature_dim, 1.5 * unit));
    }
  }

  ToyCorpus corpus;
  for (int c = 0; c < kNumCategories; ++c) {
    for (int pol = 0; pol < 2; ++pol) {
      const Template& t = kTemplates[static_cast<std::size_t>(c)][static_cast<std::size_t>(pol)];
      if (t.mention.empty()) continue;
      corpus.lexicon.add({static_cast<Category>(c), static_cast<Polarity>(pol)},
                         split_whitespace(t.mention));
    }
  }

  std::vector<double> weights;
  for (const auto& p : profiles) weights.push_back(p.weight);
  std::discrete_distribution<std::size_t> pick_profile(weights.begin(), weights.end());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, options.noise);
  const int width = static_cast<int>(std::to_string(options.size).size());

  for (std::size_t r = 0; r < options.size; ++r) {
    const ToyProfile& profile = profiles[pick_profile(rng)];
    ReportRecord rec;
    std::string num = std::to_string(r);
    rec.id = "toy-" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(num.size()))), '0') + num;

    bool any_positive = false;
    for (int c = 1; c < kNumCategories; ++c) {
      const double u = unif(rng);
      const auto ci = static_cast<std::size_t>(c);
      if (u < profile.p_positive[ci]) {
        rec.labels[static_cast<Category>(c)] =
            unif(rng) < options.uncertain_fraction ? LabelStatus::kUncertain
                                                   : LabelStatus::kPresent;
        any_positive = true;
      } else if (u < profile.p_positive[ci] + profile.p_negative[ci]) {
        rec.labels[static_cast<Category>(c)] = LabelStatus::kAbsent;
      }
    }
    rec.labels[Category::kNoFinding] =
        any_positive ? LabelStatus::kAbsent : LabelStatus::kPresent;

    Tensor features({options.regions, options.feature_dim});
    for (double& x : features.data()) x = noise(rng);

    std::vector<std::vector<std::string>> sentences;
    for (const Category c : kReportOrder) {
      auto it = rec.labels.find(c);
      if (it == rec.labels.end() || it->second == LabelStatus::kNotMentioned) continue;
      const bool pos = it->second != LabelStatus::kAbsent;
      const Observation obs{c, pos ? Polarity::kPositive : Polarity::kNegative};
      const auto oid = static_cast<std::size_t>(obs.id());
      const auto& choices = descriptors[oid];
      const std::size_t variant =
          std::uniform_int_distribution<std::size_t>(0, choices.size() - 1)(rng);

      const auto region = static_cast<std::size_t>(c) % options.regions;
      auto row = features.row(region);
      for (std::size_t k = 0; k < options.feature_dim; ++k) {
        row[k] += obs_proto[oid][k];
        if (pos) row[k] += variant_proto[oid][variant][k];
      }

      const Template& t = kTemplates[static_cast<std::size_t>(c)][pos ? 0 : 1];
      if (t.sentence.empty()) continue;
      sentences.push_back(render(t.sentence, choices[variant]));
    }
    if (unif(rng) < options.shuffle_probability) {
      std::shuffle(sentences.begin(), sentences.end(), rng);
    }
    for (auto& s : sentences) {
      rec.tokens.insert(rec.tokens.end(), s.begin(), s.end());
    }
    rec.features = std::move(features);
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

std::array<std::array<double, kNumCategories>, kNumCategories>
expected_positive_cooccurrence(const ToyCorpusOptions& options) {
  const auto profiles =
      options.profiles.empty() ? default_toy_profiles() : options.profiles;
  double total = 0.0;
  for (const auto& p : profiles) total += p.weight;
  std::array<std::array<double, kNumCategories>, kNumCategories> m{};
  for (const auto& p : profiles) {
    const double w = p.weight / total;
    for (std::size_t i = 1; i < kNumCategories; ++i) {
      for (std::size_t j = 1; j < kNumCategories; ++j) {
        m[i][j] += w * (i == j ? p.p_positive[i] : p.p_positive[i] * p.p_positive[j]);
      }
    }
  }
  return m;
}

}  // namespace obsgen
