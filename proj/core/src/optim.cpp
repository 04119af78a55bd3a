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

#include "obsgen/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "obsgen/errors.hpp"

namespace obsgen {

AdamW::AdamW(const ParameterRegistry& params, AdamWConfig cfg) : cfg_(cfg) {
  for (const auto& [_, v] : params.entries()) {
    params_.push_back(v);
    first_.emplace_back(v.shape());
    second_.emplace_back(v.shape());
  }
}

double AdamW::current_learning_rate() const {
  if (cfg_.total_steps == 0) return cfg_.learning_rate;
  const double remaining =
      1.0 - static_cast<double>(std::min(step_, cfg_.total_steps)) /
                static_cast<double>(cfg_.total_steps);
  return cfg_.learning_rate * remaining;
}

void AdamW::step() {
  double sq = 0.0;
  for (const auto& p : params_) {
    if (!p.has_grad()) continue;
    for (double g : p.grad().data()) sq += g * g;
  }
  if (!std::isfinite(sq)) throw NumericError("non-finite gradient");
  double clip = 1.0;
  if (cfg_.max_grad_norm > 0.0) {
    const double norm = std::sqrt(sq);
    if (norm > cfg_.max_grad_norm) clip = cfg_.max_grad_norm / norm;
  }

  const double lr = current_learning_rate();
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    if (!p.has_grad()) continue;
    auto w = p.mutable_value().data();
    const auto g = p.grad().data();
    auto m = first_[i].data();
    auto v = second_[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] * clip;
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                    cfg_.weight_decay * w[j]);
    }
    p.zero_grad();
  }
}

}  // namespace obsgen

namespace obsgen {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + epoch);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

}  // namespace obsgen
