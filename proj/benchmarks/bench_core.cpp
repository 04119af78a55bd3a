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

#include <benchmark/benchmark.h>

#include <random>

#include "obsgen/autograd.hpp"
#include "obsgen/generator.hpp"
#include "obsgen/logging.hpp"
#include "obsgen/miner.hpp"
#include "obsgen/planner.hpp"
#include "obsgen/toy_corpus.hpp"

using namespace obsgen;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t({rows, cols});
  for (auto& v : t.data()) v = n(rng);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Var a(random_matrix(n, n, 1)), b(random_matrix(n, n, 2));
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).value().data().data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(256);

void BM_Attention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Var q(random_matrix(n, 64, 3)), k(random_matrix(n, 64, 4)), v(random_matrix(n, 64, 5));
  const auto mask = AttentionMask::causal(n);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(attention(q, k, v, mask, 4).value().data().data());
}
BENCHMARK(BM_Attention)->Arg(16)->Arg(64)->Arg(128);

void BM_AttentionBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Var q(random_matrix(n, 64, 3), true), k(random_matrix(n, 64, 4), true),
      v(random_matrix(n, 64, 5), true);
  const auto mask = AttentionMask::causal(n);
  for (auto _ : state) backward(sum(attention(q, k, v, mask, 4)));
}
BENCHMARK(BM_AttentionBackward)->Arg(16)->Arg(64);

struct ToyFixture {
  ToyCorpus corpus;
  MinedNgrams mined;
  Vocabulary vocab;

  ToyFixture() {
    set_log_sink([](LogLevel, const std::string&) {});
    ToyCorpusOptions opts;
    opts.size = 200;
    corpus = make_toy_corpus(opts);
    MinerConfig mc;
    mc.top_k = 16;
    mined = mine_ngrams(corpus.records, mc);
    vocab = build_vocab(corpus.records, 1);
  }
};

const ToyFixture& toy() {
  static const ToyFixture f;
  return f;
}

void BM_MineNgrams(benchmark::State& state) {
  ToyCorpusOptions opts;
  opts.size = static_cast<std::size_t>(state.range(0));
  const auto corpus = make_toy_corpus(opts);
  MinerConfig mc;
  mc.top_k = 16;
  for (auto _ : state) benchmark::DoNotOptimize(mine_ngrams(corpus.records, mc).per_observation.data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MineNgrams)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

GeneratorConfig toy_generator_config(std::size_t feature_dim) {
  GeneratorConfig c;
  c.layer = LayerConfig{32, 4, 64, 0.0};
  c.feature_dim = feature_dim;
  c.max_regions = 16;
  c.graph_layers = 1;
  c.align_layers = 1;
  c.decoder_layers = 1;
  c.max_report_length = 64;
  return c;
}

void BM_GeneratorForwardBackward(benchmark::State& state) {
  const auto& f = toy();
  const auto& rec = f.corpus.records.front();
  Generator g(toy_generator_config(rec.features.cols()), f.vocab, 1);
  const auto plan = extract_plan(rec, f.corpus.lexicon).observations;
  const GeneratorExample ex{rec.features, build_graph(plan, f.mined), rec.tokens};
  const bool train = state.range(0) != 0;
  for (auto _ : state) {
    const auto terms = g.loss(ex, ForwardContext{});
    if (train) {
      g.parameters().zero_grad();
      backward(terms.loss);
    }
  }
}
BENCHMARK(BM_GeneratorForwardBackward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_PlannerForwardBackward(benchmark::State& state) {
  const auto& f = toy();
  const auto& rec = f.corpus.records.front();
  PlannerConfig pc;
  pc.layer = LayerConfig{32, 4, 64, 0.0};
  pc.feature_dim = rec.features.cols();
  pc.max_regions = 16;
  pc.encoder_layers = 1;
  pc.decoder_layers = 1;
  Planner p(pc, 1);
  const PlannerExample ex{rec.features, extract_plan(rec, f.corpus.lexicon).observations};
  for (auto _ : state) {
    const auto terms = p.loss(ex, 0.5, ForwardContext{});
    p.parameters().zero_grad();
    backward(terms.loss);
  }
}
BENCHMARK(BM_PlannerForwardBackward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
