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

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "obsgen/nn.hpp"

namespace obsgen {

// Binary layout, all integers little-endian:
//   "OBSGCKPT" | version u8 | kind (u32 len + bytes) | config (u32 len + bytes)
//   | count u32 | count x { name (u32 len + bytes) | rank u32 | dims u64[rank]
//   | values f64[numel] }
inline constexpr char kCheckpointMagic[8] = {'O', 'B', 'S', 'G',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

/// A model's parameters plus the configuration text needed to rebuild it.
struct ModelBundle {
  std::string kind;
  std::string config;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

ModelBundle bundle_from_registry(std::string kind, std::string config,
                                 const ParameterRegistry& params);

std::vector<std::uint8_t> encode_checkpoint(const ModelBundle& bundle);
ModelBundle decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path,
                     const ModelBundle& bundle);
ModelBundle load_checkpoint(const std::filesystem::path& path);

/// Copies bundle values into `params`. Names, order and shapes must agree
/// with the registry built from the stored configuration.
void restore_parameters(const ModelBundle& bundle, ParameterRegistry& params);

}  // namespace obsgen
