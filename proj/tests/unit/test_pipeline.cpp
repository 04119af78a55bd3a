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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "obsgen/checkpoint.hpp"
#include "obsgen/errors.hpp"
#include "obsgen/pipeline.hpp"

using namespace obsgen;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("obsgen-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PipelineConfig small_config(const fs::path& out) {
  PipelineConfig c = PipelineConfig::from_preset("toy");
  c.apply_ini(R"(
[data]
toy_size = 30
toy_test_size = 6
[model]
hidden = 16
num_heads = 2
ffn = 32
[planner]
epochs = 2
[generator]
epochs = 2
[decode]
max_steps = 12
)");
  c.output_dir = out;
  return c;
}

}  // namespace

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("ini overrides and errors") {
  PipelineConfig c = PipelineConfig::from_preset("toy");
  c.apply_ini(R"(
# comment
; another
[run]
seed = 42
[planner]
alpha = 0.25
[sweep]
k = 1, 4, 9
)");
  CHECK(c.seed == 42);
  CHECK(c.planner.alpha == 0.25);
  CHECK(c.sweep_k == std::vector<std::size_t>{1, 4, 9});

  CHECK_THROWS_AS(c.apply_ini("[planner]\nalpah = 1\n"), ConfigError);
  CHECK_THROWS_AS(c.apply_ini("[planner\n"), ConfigError);
  CHECK_THROWS_AS(c.apply_ini("[planner]\nalpha\n"), ConfigError);
  CHECK_THROWS_AS(c.apply_ini("[planner]\nepochs = many\n"), ConfigError);
  CHECK_THROWS_AS(c.apply_ini("seed = 3\n"), ConfigError);  // no section
  CHECK_THROWS_AS(PipelineConfig::from_preset("chexpert"), ConfigError);

  c.apply_ini("[miner]\ntop_k = 0\n");
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("to_ini round-trips every key") {
  for (const char* preset : {"toy", "iu", "mimic"}) {
    PipelineConfig a = PipelineConfig::from_preset(preset);
    a.seed = 7;
    a.planner.alpha = 0.3;
    PipelineConfig b;
    b.apply_ini(a.to_ini());
    CHECK(b.to_ini() == a.to_ini());
  }
}

TEST_CASE("relative paths resolve against the config file") {
  const fs::path dir = scratch_dir("paths");
  std::ofstream(dir / "run.ini") << "[run]\npreset = iu\n[data]\ntrain = data/train.jsonl\n";
  const PipelineConfig c = load_pipeline_config(dir / "run.ini");
  CHECK(c.preset == "iu");
  CHECK(c.data.train == dir / "data/train.jsonl");
  CHECK(c.miner.top_k == 30);
  fs::remove_all(dir);
}

TEST_CASE("output directory environment override") {
  ::setenv(kOutputDirEnv, "/tmp/obsgen-env-out", 1);
  CHECK(preset_pipeline_config("toy").output_dir == "/tmp/obsgen-env-out");
  ::unsetenv(kOutputDirEnv);
  CHECK(preset_pipeline_config("toy").output_dir == "obsgen-toy-out");
}

TEST_CASE("checkpoint encoding") {
  Tensor a({2, 3});
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.1 * static_cast<double>(i) - 0.2;
  const ModelBundle b{"planner", "{\"x\":1}", {{"w", a}, {"b", Tensor({1, 1}, 3.5)}}};
  const auto bytes = encode_checkpoint(b);
  CHECK(std::equal(bytes.begin(), bytes.begin() + 8, kCheckpointMagic));
  const ModelBundle r = decode_checkpoint(bytes);
  CHECK(r.kind == b.kind);
  CHECK(r.config == b.config);
  REQUIRE(r.tensors.size() == 2);
  CHECK(r.tensors[0].first == "w");
  CHECK(r.tensors[0].second.shape() == a.shape());
  CHECK(std::ranges::equal(r.tensors[0].second.data(), a.data()));
  CHECK(encode_checkpoint(r) == bytes);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS(decode_checkpoint(truncated));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS(decode_checkpoint(bad_magic));
}

TEST_CASE("pipeline writes artifacts and a manifest") {
  const fs::path dir = scratch_dir("run");
  const auto result = run_pipeline(small_config(dir));
  for (const char* name : {"ngrams.json", "planner.ckpt", "generator.ckpt", "predictions.jsonl",
                           "metrics.json", "manifest.json"}) {
    CHECK(fs::exists(dir / name));
  }
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest.at("artifacts").at("planner.ckpt").get<std::string>() ==
        hex64(fnv1a64(slurp(dir / "planner.ckpt"))));
  CHECK(manifest.at("config_hash").get<std::string>() ==
        hex64(fnv1a64(manifest.at("config").get<std::string>())));

  const auto predictions = read_predictions(dir / "predictions.jsonl");
  CHECK(predictions.size() == 6);
  for (const auto& p : predictions) CHECK_FALSE(p.plan.empty());
  CHECK(result.metrics.examples == 6);

  // Saved models reproduce the run's outputs.
  const Planner planner = Planner::from_bundle(load_checkpoint(dir / "planner.ckpt"));
  const Generator generator = Generator::from_bundle(load_checkpoint(dir / "generator.ckpt"));
  const MinedNgrams mined = read_mined(dir / "ngrams.json");
  const auto test = read_records(dir / "records_test.jsonl");
  const auto again = generate_reports(test, &planner, generator, mined, small_config(dir).beam);
  REQUIRE(again.size() == predictions.size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    CHECK(again[i].id == predictions[i].id);
    CHECK(again[i].plan == predictions[i].plan);
    CHECK(again[i].tokens == predictions[i].tokens);
  }
  fs::remove_all(dir);
}

TEST_CASE("stage failures name the stage") {
  const fs::path dir = scratch_dir("fail");
  PipelineConfig c = small_config(dir);
  c.generator.max_plan_positions = 1;
  try {
    run_pipeline(c);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("stage train-generator") != std::string::npos);
  }
  fs::remove_all(dir);
}
