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

#include "obsgen/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "obsgen/errors.hpp"

namespace obsgen {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<double> log_probs(const StepFn& step, const std::vector<int>& prefix,
                              std::span<const int> emitted,
                              const DecodeOptions& opts) {
  std::vector<double> logits = step(prefix);
  if (logits.empty()) throw NumericError("decode: step function returned no logits");
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) {
      std::ostringstream msg;
      msg << "decode: non-finite logit " << logits[i] << " for token " << i
          << " at step " << prefix.size() - 1 << " (prefix:";
      for (int t : prefix) msg << ' ' << t;
      msg << ')';
      throw NumericError(msg.str());
    }
  }
  for (int b : opts.banned) {
    if (b >= 0 && static_cast<std::size_t>(b) < logits.size()) logits[b] = kNegInf;
  }
  if (opts.block_repeats) {
    for (int t : emitted) {
      if (t != opts.eos && t >= 0 && static_cast<std::size_t>(t) < logits.size()) {
        logits[t] = kNegInf;
      }
    }
  }
  const double max = *std::max_element(logits.begin(), logits.end());
  if (max == kNegInf) {
    // Everything is banned; only EOS can close the hypothesis.
    std::vector<double> out(logits.size(), kNegInf);
    out.at(static_cast<std::size_t>(opts.eos)) = 0.0;
    return out;
  }
  double z = 0.0;
  for (double l : logits) z += std::exp(l - max);
  const double lse = max + std::log(z);
  for (double& l : logits) l -= lse;
  return logits;
}

double ranking_score(const Hypothesis& h, double exponent) {
  if (exponent == 0.0 || h.tokens.empty()) return h.score;
  return h.score / std::pow(static_cast<double>(h.tokens.size()), exponent);
}

}  // namespace

void BeamConfig::validate() const {
  if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
}

Hypothesis beam_search_scored(const StepFn& step, const BeamConfig& cfg,
                              const DecodeOptions& opts) {
  cfg.validate();
  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> finished;

  struct Candidate {
    double score;
    std::size_t parent;
    int token;
  };

  for (std::size_t t = 0; t < cfg.max_steps && !live.empty(); ++t) {
    std::vector<Candidate> cands;
    for (std::size_t h = 0; h < live.size(); ++h) {
      std::vector<int> prefix{opts.bos};
      prefix.insert(prefix.end(), live[h].tokens.begin(), live[h].tokens.end());
      const auto lp = log_probs(step, prefix, live[h].tokens, opts);
      for (std::size_t v = 0; v < lp.size(); ++v) {
        if (lp[v] == kNegInf) continue;
        cands.push_back({live[h].score + lp[v], h, static_cast<int>(v)});
      }
    }
    const std::size_t keep = std::min(cfg.beam_size, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep),
                      cands.end(), [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      Hypothesis h = live[cands[i].parent];
      h.tokens.push_back(cands[i].token);
      h.score = cands[i].score;
      if (cands[i].token == opts.eos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);

    // Scores only fall as hypotheses grow, so without length normalisation
    // no live hypothesis can overtake the best finished one.
    if (cfg.length_exponent == 0.0 && !finished.empty() && !live.empty()) {
      double best_finished = kNegInf;
      for (const auto& f : finished) best_finished = std::max(best_finished, f.score);
      double best_live = kNegInf;
      for (const auto& l : live) best_live = std::max(best_live, l.score);
      if (best_finished >= best_live) live.clear();
    }
  }
  for (auto& h : live) finished.push_back(std::move(h));

  const Hypothesis* best = nullptr;
  for (const auto& h : finished) {
    if (best == nullptr) {
      best = &h;
      continue;
    }
    const double a = ranking_score(h, cfg.length_exponent);
    const double b = ranking_score(*best, cfg.length_exponent);
    if (a > b || (a == b && h.tokens < best->tokens)) best = &h;
  }
  return *best;
}

std::vector<int> beam_search(const StepFn& step, const BeamConfig& cfg,
                             const DecodeOptions& opts) {
  return beam_search_scored(step, cfg, opts).tokens;
}

std::vector<int> greedy_decode(const StepFn& step, std::size_t max_steps,
                               const DecodeOptions& opts) {
  std::vector<int> out;
  std::vector<int> prefix{opts.bos};
  for (std::size_t t = 0; t < max_steps; ++t) {
    const auto lp = log_probs(step, prefix, out, opts);
    const int next = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    out.push_back(next);
    prefix.push_back(next);
    if (next == opts.eos) break;
  }
  return out;
}

double sequence_score(const StepFn& step, std::span<const int> tokens,
                      const DecodeOptions& opts) {
  double score = 0.0;
  std::vector<int> prefix{opts.bos};
  std::vector<int> emitted;
  for (int tok : tokens) {
    score += log_probs(step, prefix, emitted, opts).at(static_cast<std::size_t>(tok));
    prefix.push_back(tok);
    emitted.push_back(tok);
  }
  return score;
}

}  // namespace obsgen
