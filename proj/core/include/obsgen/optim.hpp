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

#include <cstddef>
#include <cstdint>
#include <vector>

#include "obsgen/nn.hpp"

namespace obsgen {

struct AdamWConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  /// Linear decay from learning_rate to 0 across this many steps; 0 keeps
  /// the rate constant.
  std::size_t total_steps = 0;
  /// Gradients are rescaled so their global L2 norm stays below this; 0
  /// disables clipping.
  double max_grad_norm = 1.0;
};

/// Adam with decoupled weight decay over every entry of a registry.
class AdamW {
 public:
  AdamW(const ParameterRegistry& params, AdamWConfig cfg);

  /// Applies one update from the accumulated gradients, then clears them.
  void step();
  double current_learning_rate() const;
  std::size_t steps_taken() const { return step_; }

 private:
  std::vector<Var> params_;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  AdamWConfig cfg_;
  std::size_t step_ = 0;
};

/// Shared knobs for the two training loops.
struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double max_grad_norm = 1.0;
  std::uint64_t seed = 1;
  /// Evaluate on the validation split every this many epochs; 0 never.
  std::size_t eval_every = 1;
};

/// Example order for one epoch; a pure function of (n, seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     std::size_t epoch);

}  // namespace obsgen
