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

#include "obsgen/obsgraph.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "obsgen/errors.hpp"
#include "obsgen/logging.hpp"

namespace obsgen {

std::string_view level_name(NodeLevel level) {
  switch (level) {
    case NodeLevel::kObservation: return "observation";
    case NodeLevel::kNgram: return "ngram";
    case NodeLevel::kToken: return "token";
  }
  return "?";
}

std::string_view edge_type_name(EdgeType type) {
  switch (type) {
    case EdgeType::kObsObs: return "E1";
    case EdgeType::kObsNgram: return "E2";
    case EdgeType::kNgramToken: return "E3";
  }
  return "?";
}

NodeLevel ObservationGraph::level(std::size_t node) const {
  if (node < ngram_offset()) return NodeLevel::kObservation;
  if (node < token_offset()) return NodeLevel::kNgram;
  if (node < num_nodes()) return NodeLevel::kToken;
  throw std::out_of_range("graph node " + std::to_string(node));
}

std::string ObservationGraph::surface(std::size_t node) const {
  switch (level(node)) {
    case NodeLevel::kObservation: return observations[node].key();
    case NodeLevel::kNgram: return join_tokens(ngrams[node - ngram_offset()]);
    case NodeLevel::kToken: return tokens[node - token_offset()];
  }
  return {};
}

ObservationGraph build_graph(std::span<const Observation> plan,
                             const MinedNgrams& mined) {
  if (plan.empty()) throw DataError("build_graph: empty plan");
  ObservationGraph g;
  g.observations.assign(plan.begin(), plan.end());

  std::map<std::vector<std::string>, std::size_t> ngram_index;
  std::vector<std::pair<std::size_t, std::size_t>> e2;  // (z, s) local
  std::vector<const NgramCandidate*> owners;
  for (std::size_t z = 0; z < plan.size(); ++z) {
    const auto& list = mined.for_observation(plan[z]);
    if (list.empty()) {
      log_warning("build_graph: no mined n-grams for " + plan[z].key());
    }
    for (const auto& c : list) {
      auto [it, inserted] = ngram_index.emplace(c.tokens, g.ngrams.size());
      if (inserted) {
        g.ngrams.push_back(c.tokens);
        owners.push_back(&c);
      }
      e2.emplace_back(z, it->second);
    }
  }

  std::unordered_map<std::string, std::size_t> token_index;
  std::vector<std::pair<std::size_t, std::size_t>> e3;  // (s, t) local
  for (std::size_t s = 0; s < owners.size(); ++s) {
    std::unordered_set<std::string> seen;
    for (const auto& tok : owners[s]->node_tokens) {
      if (!seen.insert(tok).second) continue;
      auto [it, inserted] = token_index.emplace(tok, g.tokens.size());
      if (inserted) g.tokens.push_back(tok);
      e3.emplace_back(s, it->second);
    }
  }

  const std::size_t n = g.num_nodes();
  g.adjacency.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) g.adjacency[i * n + i] = 1;
  for (std::size_t z = 0; z + 1 < plan.size(); ++z) {
    g.edges.push_back({z, z + 1, EdgeType::kObsObs});
    g.adjacency[z * n + z + 1] = 1;
    g.adjacency[(z + 1) * n + z] = 1;
  }
  for (auto [z, s] : e2) {
    const std::size_t dst = g.ngram_offset() + s;
    g.edges.push_back({z, dst, EdgeType::kObsNgram});
    g.adjacency[z * n + dst] = 1;
  }
  for (auto [s, t] : e3) {
    const std::size_t src = g.ngram_offset() + s;
    const std::size_t dst = g.token_offset() + t;
    g.edges.push_back({src, dst, EdgeType::kNgramToken});
    g.adjacency[src * n + dst] = 1;
  }
  return g;
}

AttentionMask adjacency_mask(const ObservationGraph& g) {
  const std::size_t n = g.num_nodes();
  AttentionMask mask = AttentionMask::full(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) mask.set(i, j, g.adjacent(i, j));
  }
  return mask;
}

std::vector<double> token_membership(const ObservationGraph& g,
                                     std::span<const std::string> report) {
  const std::unordered_set<std::string> present(report.begin(), report.end());
  std::vector<double> d;
  d.reserve(g.tokens.size());
  for (const auto& t : g.tokens) d.push_back(present.count(t) ? 1.0 : 0.0);
  return d;
}

std::string graph_to_json(const ObservationGraph& g) {
  nlohmann::ordered_json j;
  auto nodes = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    nodes.push_back({{"index", i},
                     {"level", level_name(g.level(i))},
                     {"surface", g.surface(i)}});
  }
  auto edges = nlohmann::ordered_json::array();
  for (const auto& e : g.edges) {
    edges.push_back({{"src", e.src}, {"dst", e.dst}, {"type", edge_type_name(e.type)}});
  }
  j["nodes"] = std::move(nodes);
  j["edges"] = std::move(edges);
  return j.dump();
}

}  // namespace obsgen
