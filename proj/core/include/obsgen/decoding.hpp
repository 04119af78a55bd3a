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

#include <functional>
#include <span>
#include <vector>

namespace obsgen {

struct BeamConfig {
  std::size_t beam_size = 4;
  std::size_t max_steps = 64;
  /// Finished hypotheses are ranked by score / length^exponent.
  double length_exponent = 0.0;

  void validate() const;
};

/// Next-token logits for a prefix that starts with BOS.
using StepFn = std::function<std::vector<double>(std::span<const int> prefix)>;

struct DecodeOptions {
  int bos = 1;
  int eos = 2;
  /// Never emitted (e.g. PAD, BOS).
  std::vector<int> banned;
  /// Forbid emitting a token already in the hypothesis (EOS exempt).
  bool block_repeats = false;
};

struct Hypothesis {
  std::vector<int> tokens;  // without BOS; ends with EOS when finished
  double score = 0.0;       // summed log-probabilities
  bool finished = false;
};

/// Standard beam search. Every step expands each live hypothesis over the
/// vocabulary, keeps the beam_size best candidates, and retires those that
/// end in EOS; hypotheses alive at max_steps are completed as they stand.
/// Ties break towards lower token ids. Throws NumericError on non-finite
/// logits.
Hypothesis beam_search_scored(const StepFn& step, const BeamConfig& cfg,
                              const DecodeOptions& opts);
std::vector<int> beam_search(const StepFn& step, const BeamConfig& cfg,
                             const DecodeOptions& opts);

std::vector<int> greedy_decode(const StepFn& step, std::size_t max_steps,
                               const DecodeOptions& opts);

/// Sum of log-probabilities the step function assigns to `tokens`.
double sequence_score(const StepFn& step, std::span<const int> tokens,
                      const DecodeOptions& opts);

}  // namespace obsgen
