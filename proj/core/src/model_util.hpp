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

#include <string>
#include <vector>

#include "json.hpp"
#include "obsgen/errors.hpp"
#include "obsgen/nn.hpp"

namespace obsgen::detail {

inline nlohmann::ordered_json layer_to_json(const LayerConfig& c) {
  return {{"hidden", c.hidden}, {"num_heads", c.num_heads}, {"ffn", c.ffn},
          {"dropout", c.dropout}};
}

inline LayerConfig layer_from_json(const nlohmann::json& j) {
  LayerConfig c;
  c.hidden = j.at("hidden").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<int>();
  c.ffn = j.at("ffn").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

inline nlohmann::json parse_config(const std::string& text, const char* what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(what) + " config: " + e.what());
  }
}

/// Copies of every parameter value, for best-epoch selection.
inline std::vector<Tensor> snapshot(const ParameterRegistry& params) {
  std::vector<Tensor> out;
  for (const auto& [_, v] : params.entries()) out.push_back(v.value());
  return out;
}

inline void restore(ParameterRegistry& params, const std::vector<Tensor>& values) {
  std::size_t i = 0;
  for (auto& [_, v] : params.entries()) {
    Var p = v;
    p.mutable_value() = values.at(i++);
  }
}

}  // namespace obsgen::detail
