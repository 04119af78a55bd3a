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

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "obsgen/autograd.hpp"
#include "obsgen/corpus.hpp"
#include "obsgen/miner.hpp"

namespace obsgen {

enum class NodeLevel { kObservation, kNgram, kToken };
enum class EdgeType { kObsObs, kObsNgram, kNgramToken };

std::string_view level_name(NodeLevel level);
std::string_view edge_type_name(EdgeType type);

struct GraphEdge {
  std::size_t src = 0;
  std::size_t dst = 0;
  EdgeType type = EdgeType::kObsObs;

  friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
};

/// Three-level graph over one example. Nodes are laid out Z, then S, then T.
/// E1 edges are stored once (lower index first) and are symmetric in the
/// adjacency; E2/E3 edges grant attention only from source row to target
/// column.
struct ObservationGraph {
  std::vector<Observation> observations;          // Z, plan order
  std::vector<std::vector<std::string>> ngrams;   // S
  std::vector<std::string> tokens;                // T
  std::vector<GraphEdge> edges;
  std::vector<std::uint8_t> adjacency;            // row-major, |V| x |V|

  std::size_t num_nodes() const {
    return observations.size() + ngrams.size() + tokens.size();
  }
  std::size_t ngram_offset() const { return observations.size(); }
  std::size_t token_offset() const { return observations.size() + ngrams.size(); }

  bool adjacent(std::size_t i, std::size_t j) const {
    return adjacency[i * num_nodes() + j] != 0;
  }
  NodeLevel level(std::size_t node) const;
  std::string surface(std::size_t node) const;
};

/// Z = the plan; S = the plan observations' mined n-grams, first owner
/// first; T = their node tokens, deduplicated in first-seen order. A plan
/// observation with no mined n-grams keeps its node and gets a warning.
ObservationGraph build_graph(std::span<const Observation> plan,
                             const MinedNgrams& mined);
inline ObservationGraph build_graph(const ObservationPlan& plan,
                                    const MinedNgrams& mined) {
  return build_graph(plan.observations, mined);
}

AttentionMask adjacency_mask(const ObservationGraph& g);

/// d_i = 1 when token node i occurs in `report`.
std::vector<double> token_membership(const ObservationGraph& g,
                                     std::span<const std::string> report);

/// JSON: {"nodes": [{index, level, surface}], "edges": [{src, dst, type}]}.
std::string graph_to_json(const ObservationGraph& g);

}  // namespace obsgen
