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

// A frozen random recurrent scorer over a small vocabulary, used as a
// stand-in language model for decoding checks.

#include <cmath>
#include <random>
#include <span>
#include <vector>

namespace obsgen::testing {

class RandomLm {
 public:
  RandomLm(std::size_t vocab, std::size_t input_vocab, std::uint64_t seed,
           double scale = 2.0, std::size_t hidden = 6)
      : vocab_(vocab), hidden_(hidden) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    auto fill = [&](std::vector<double>& v, std::size_t size, double s) {
      v.resize(size);
      for (double& x : v) x = s * n(rng);
    };
    fill(embed_, input_vocab * hidden, 1.0);
    fill(recur_, hidden * hidden, 0.8 / std::sqrt(static_cast<double>(hidden)));
    fill(out_, vocab * hidden, scale / std::sqrt(static_cast<double>(hidden)));
  }

  std::vector<double> operator()(std::span<const int> prefix) const {
    std::vector<double> h(hidden_, 0.0);
    for (int tok : prefix) {
      std::vector<double> next(hidden_);
      for (std::size_t i = 0; i < hidden_; ++i) {
        double acc = embed_[static_cast<std::size_t>(tok) * hidden_ + i];
        for (std::size_t j = 0; j < hidden_; ++j) acc += recur_[i * hidden_ + j] * h[j];
        next[i] = std::tanh(acc);
      }
      h = std::move(next);
    }
    std::vector<double> logits(vocab_);
    for (std::size_t v = 0; v < vocab_; ++v) {
      for (std::size_t j = 0; j < hidden_; ++j) logits[v] += out_[v * hidden_ + j] * h[j];
    }
    return logits;
  }

 private:
  std::size_t vocab_;
  std::size_t hidden_;
  std::vector<double> embed_, recur_, out_;
};

inline std::vector<double> log_softmax(const std::vector<double>& logits) {
  double m = logits[0];
  for (double x : logits) m = std::max(m, x);
  double z = 0.0;
  for (double x : logits) z += std::exp(x - m);
  std::vector<double> out;
  for (double x : logits) out.push_back(x - m - std::log(z));
  return out;
}

struct ExhaustiveResult {
  std::vector<int> tokens;
  double score;
};

// Best complete sequence by enumeration: a sequence ends at EOS, or at
// max_steps without one. Ties go to the lexicographically smaller sequence.
template <class Lm>
ExhaustiveResult exhaustive_argmax(const Lm& lm, std::size_t vocab, std::size_t max_steps,
                                   int bos, int eos) {
  ExhaustiveResult best{{}, -INFINITY};
  std::vector<int> seq;
  auto consider = [&](double score) {
    if (score > best.score || (score == best.score && seq < best.tokens)) best = {seq, score};
  };
  auto rec = [&](auto&& self, double score) -> void {
    std::vector<int> prefix{bos};
    prefix.insert(prefix.end(), seq.begin(), seq.end());
    const auto lp = log_softmax(lm(prefix));
    for (std::size_t v = 0; v < vocab; ++v) {
      seq.push_back(static_cast<int>(v));
      const double s = score + lp[v];
      if (static_cast<int>(v) == eos || seq.size() == max_steps) {
        consider(s);
      } else {
        self(self, s);
      }
      seq.pop_back();
    }
  };
  rec(rec, 0.0);
  return best;
}

}  // namespace obsgen::testing
