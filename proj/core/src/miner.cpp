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

#include "obsgen/miner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "obsgen/errors.hpp"
#include "obsgen/logging.hpp"

namespace obsgen {
namespace {

struct Unit {
  std::string text;
  std::size_t length;
};

std::string obs_unit(Observation obs) { return "obs:" + obs.key(); }
std::string ngram_unit(const std::string& text) { return "ngram:" + text; }

}  // namespace

std::string PmiTable::pair_key(const std::string& a, const std::string& b) {
  return a < b ? a + '\x1f' + b : b + '\x1f' + a;
}

void PmiTable::add_unit(const std::string& unit, std::uint64_t n) {
  units_[unit] += n;
}

void PmiTable::add_pair(const std::string& a, const std::string& b,
                        std::uint64_t n) {
  pairs_[pair_key(a, b)] += n;
}

void PmiTable::merge(const PmiTable& other) {
  for (const auto& [k, v] : other.units_) units_[k] += v;
  for (const auto& [k, v] : other.pairs_) pairs_[k] += v;
  total_ += other.total_;
}

std::uint64_t PmiTable::unit_count(const std::string& unit) const {
  auto it = units_.find(unit);
  return it == units_.end() ? 0 : it->second;
}

std::uint64_t PmiTable::pair_count(const std::string& a,
                                   const std::string& b) const {
  auto it = pairs_.find(pair_key(a, b));
  return it == pairs_.end() ? 0 : it->second;
}

double pmi(const std::string& a, const std::string& b, const PmiTable& table) {
  const auto ca = table.unit_count(a);
  const auto cb = table.unit_count(b);
  if (ca == 0 || cb == 0) {
    throw DataError("pmi: unit '" + (ca == 0 ? a : b) + "' was never counted");
  }
  const double n = static_cast<double>(table.total());
  const double joint =
      (static_cast<double>(table.pair_count(a, b)) + table.smoothing()) / n;
  return std::log(joint / ((static_cast<double>(ca) / n) * (static_cast<double>(cb) / n)));
}

std::vector<std::vector<std::string>> split_sentences(
    std::span<const std::string> tokens) {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> current;
  for (const auto& tok : tokens) {
    if (tok == kSentenceBoundary) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(tok);
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

PmiTable count_adjacency(const std::vector<std::vector<std::string>>& sentences,
                         double smoothing) {
  PmiTable table(smoothing);
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      table.add_unit(s[i]);
      if (i + 1 < s.size()) table.add_pair(s[i], s[i + 1]);
    }
    table.add_total(s.size());
  }
  return table;
}

std::unordered_map<std::string, std::uint64_t> count_substrings(
    std::span<const ReportRecord> records) {
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& r : records) {
    for (const auto& s : split_sentences(r.tokens)) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        std::string text;
        for (std::size_t n = 1; n <= kMaxNgramLength && i + n <= s.size(); ++n) {
          if (n > 1) text += ' ';
          text += s[i + n - 1];
          ++counts[text];
        }
      }
    }
  }
  return counts;
}

std::vector<NgramCandidate> segment_ngrams(std::span<const ReportRecord> records,
                                           const MinerConfig& cfg) {
  std::vector<std::vector<Unit>> segs;
  for (const auto& r : records) {
    for (auto& s : split_sentences(r.tokens)) {
      std::vector<Unit> units;
      for (auto& tok : s) units.push_back({std::move(tok), 1});
      segs.push_back(std::move(units));
    }
  }

  std::map<std::string, std::vector<std::string>> formed;
  for (const auto& s : segs) {
    for (const auto& u : s) formed.emplace(u.text, std::vector<std::string>{u.text});
  }

  bool merged_any = true;
  while (merged_any) {
    merged_any = false;
    std::vector<std::vector<std::string>> texts;
    texts.reserve(segs.size());
    for (const auto& s : segs) {
      std::vector<std::string> t;
      for (const auto& u : s) t.push_back(u.text);
      texts.push_back(std::move(t));
    }
    const PmiTable table = count_adjacency(texts, cfg.smoothing);

    for (auto& s : segs) {
      struct Pair {
        double score;
        std::size_t left;
      };
      std::vector<Pair> pairs;
      for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        if (s[i].length + s[i + 1].length > kMaxNgramLength) continue;
        const double score = pmi(s[i].text, s[i + 1].text, table);
        if (score >= cfg.merge_threshold) pairs.push_back({score, i});
      }
      if (pairs.empty()) continue;
      std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        return a.score > b.score;
      });
      std::vector<bool> used(s.size(), false);
      std::vector<bool> merge_right(s.size(), false);
      for (const auto& p : pairs) {
        if (used[p.left] || used[p.left + 1]) continue;
        used[p.left] = used[p.left + 1] = true;
        merge_right[p.left] = true;
      }
      std::vector<Unit> next;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (merge_right[i]) {
          Unit u{s[i].text + ' ' + s[i + 1].text, s[i].length + s[i + 1].length};
          formed.emplace(u.text, split_whitespace(u.text));
          next.push_back(std::move(u));
          ++i;
          merged_any = true;
        } else {
          next.push_back(std::move(s[i]));
        }
      }
      s = std::move(next);
    }
  }

  const auto freq = count_substrings(records);
  std::vector<NgramCandidate> out;
  for (auto& [text, tokens] : formed) {
    NgramCandidate c;
    c.tokens = tokens;
    c.frequency = freq.at(text);
    out.push_back(std::move(c));
  }
  return out;
}

PmiTable count_associations(std::span<const ReportRecord> records,
                            std::span<const NgramCandidate> candidates,
                            double smoothing) {
  std::unordered_set<std::string> wanted;
  for (const auto& c : candidates) wanted.insert(c.text());
  PmiTable table(smoothing);
  for (const auto& r : records) {
    std::set<std::string> present;
    for (const auto& s : split_sentences(r.tokens)) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        std::string text;
        for (std::size_t n = 1; n <= kMaxNgramLength && i + n <= s.size(); ++n) {
          if (n > 1) text += ' ';
          text += s[i + n - 1];
          if (wanted.count(text)) present.insert(text);
        }
      }
    }
    const auto observations = labels_to_observations(r.labels);
    for (const auto& obs : observations) table.add_unit(obs_unit(obs));
    for (const auto& text : present) {
      table.add_unit(ngram_unit(text));
      for (const auto& obs : observations) table.add_pair(obs_unit(obs), ngram_unit(text));
    }
    table.add_total(1);
  }
  return table;
}

std::vector<NgramCandidate> associate(Observation observation,
                                      std::span<const NgramCandidate> candidates,
                                      const PmiTable& table) {
  const std::string obs = obs_unit(observation);
  if (table.unit_count(obs) == 0) return {};
  std::vector<NgramCandidate> scored;
  for (const auto& c : candidates) {
    const std::string unit = ngram_unit(c.text());
    if (table.unit_count(unit) == 0) continue;
    NgramCandidate s = c;
    s.score = pmi(obs, unit, table);
    scored.push_back(std::move(s));
  }
  std::sort(scored.begin(), scored.end(),
            [](const NgramCandidate& a, const NgramCandidate& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.frequency != b.frequency) return a.frequency > b.frequency;
              return a.tokens < b.tokens;
            });
  return scored;
}

std::vector<NgramCandidate> top_k(std::span<const NgramCandidate> scored,
                                  std::size_t k,
                                  const std::unordered_set<std::string>& stopwords) {
  std::vector<NgramCandidate> out;
  for (const auto& c : scored) {
    if (out.size() == k) break;
    NgramCandidate kept = c;
    kept.node_tokens.clear();
    for (const auto& t : c.tokens) {
      if (!stopwords.count(t)) kept.node_tokens.push_back(t);
    }
    if (kept.node_tokens.empty()) continue;
    out.push_back(std::move(kept));
  }
  if (out.size() < k) {
    log_warning("top_k: only " + std::to_string(out.size()) + " of " +
                std::to_string(k) + " requested n-grams available");
  }
  return out;
}

MinedNgrams MinedNgrams::truncated(std::size_t k) const {
  MinedNgrams out;
  out.top_k = k;
  for (std::size_t i = 0; i < per_observation.size(); ++i) {
    const auto& src = per_observation[i];
    out.per_observation[i].assign(src.begin(),
                                  src.begin() + static_cast<std::ptrdiff_t>(std::min(k, src.size())));
  }
  return out;
}

MinedNgrams mine_ngrams(std::span<const ReportRecord> records,
                        const MinerConfig& cfg) {
  if (cfg.top_k == 0) throw ConfigError("miner: K must be >= 1");
  if (records.empty()) throw DataError("miner: empty corpus");
  const auto stop_list = read_stopwords(cfg.stopwords_path);
  const std::unordered_set<std::string> stopwords(stop_list.begin(), stop_list.end());

  std::vector<NgramCandidate> candidates;
  for (auto& c : segment_ngrams(records, cfg)) {
    if (c.frequency >= cfg.min_frequency) candidates.push_back(std::move(c));
  }
  const PmiTable table = count_associations(records, candidates, cfg.smoothing);

  MinedNgrams mined;
  mined.top_k = cfg.top_k;
  for (int id = 0; id < kNumObservations; ++id) {
    const Observation obs = Observation::from_id(id);
    auto scored = associate(obs, candidates, table);
    if (scored.empty()) continue;
    std::erase_if(scored, [&](const NgramCandidate& c) {
      return c.score < cfg.association_floor;
    });
    mined.per_observation[static_cast<std::size_t>(id)] =
        top_k(scored, cfg.top_k, stopwords);
  }
  return mined;
}

std::string mined_to_json(const MinedNgrams& mined) {
  nlohmann::ordered_json j;
  j["top_k"] = mined.top_k;
  auto obs_json = nlohmann::ordered_json::object();
  for (int id = 0; id < kNumObservations; ++id) {
    const Observation obs = Observation::from_id(id);
    const auto& list = mined.for_observation(obs);
    if (list.empty()) continue;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& c : list) {
      nlohmann::ordered_json e;
      e["tokens"] = c.tokens;
      e["score"] = c.score;
      e["frequency"] = c.frequency;
      e["node_tokens"] = c.node_tokens;
      arr.push_back(std::move(e));
    }
    obs_json[obs.key()] = std::move(arr);
  }
  j["observations"] = std::move(obs_json);
  return j.dump(2);
}

void write_mined(const std::filesystem::path& path, const MinedNgrams& mined) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write n-gram artifact " + path.string());
  out << mined_to_json(mined) << '\n';
}

MinedNgrams read_mined(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open n-gram artifact " + path.string());
  MinedNgrams mined;
  try {
    const auto j = nlohmann::json::parse(in);
    mined.top_k = j.at("top_k").get<std::size_t>();
    for (const auto& [key, arr] : j.at("observations").items()) {
      const Observation obs = Observation::parse(key);
      auto& list = mined.per_observation[static_cast<std::size_t>(obs.id())];
      for (const auto& e : arr) {
        NgramCandidate c;
        c.tokens = e.at("tokens").get<std::vector<std::string>>();
        c.score = e.at("score").get<double>();
        c.frequency = e.at("frequency").get<std::uint64_t>();
        c.node_tokens = e.at("node_tokens").get<std::vector<std::string>>();
        list.push_back(std::move(c));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("n-gram artifact " + path.string() + ": " + e.what());
  }
  return mined;
}

}  // namespace obsgen
