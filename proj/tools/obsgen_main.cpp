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

// obsgen command-line driver.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "obsgen/checkpoint.hpp"
#include "obsgen/errors.hpp"
#include "obsgen/logging.hpp"
#include "obsgen/pipeline.hpp"
#include "obsgen/toy_corpus.hpp"

namespace fs = std::filesystem;
using namespace obsgen;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

PipelineConfig resolve_config(const std::string& config_path, const std::string& preset) {
  return config_path.empty() ? preset_pipeline_config(preset)
                             : load_pipeline_config(config_path);
}

MinedNgrams mined_for(const PipelineConfig& cfg, const Dataset& data,
                      const std::string& ngrams_path) {
  if (!ngrams_path.empty()) return read_mined(ngrams_path);
  const fs::path cached = cfg.output_dir / "ngrams.json";
  if (fs::exists(cached)) return read_mined(cached);
  return mine_ngrams(data.train, cfg.miner);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Observation-guided report generation toolkit"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

  // toy-corpus
  auto* toy = app.add_subcommand("toy-corpus", "Write a synthetic labelled corpus");
  ToyCorpusOptions toy_opts;
  fs::path toy_records = "toy_records.jsonl";
  fs::path toy_lexicon = "toy_lexicon.json";
  toy->add_option("--size", toy_opts.size, "Number of records")->capture_default_str();
  toy->add_option("--vocab-size", toy_opts.vocab_size, "Descriptor words")->capture_default_str();
  toy->add_option("--seed", toy_opts.seed)->capture_default_str();
  toy->add_option("--noise", toy_opts.noise, "Feature noise stddev")->capture_default_str();
  toy->add_option("--out", toy_records, "Record file")->capture_default_str();
  toy->add_option("--lexicon-out", toy_lexicon, "Lexicon file")->capture_default_str();

  // mine
  auto* mine = app.add_subcommand("mine", "Mine observation-aware n-grams");
  fs::path mine_records, mine_out = "ngrams.json";
  MinerConfig mine_cfg;
  mine->add_option("--records", mine_records)->required()->check(CLI::ExistingFile);
  mine->add_option("--stopwords", mine_cfg.stopwords_path)->check(CLI::ExistingFile);
  mine->add_option("-k,--top-k", mine_cfg.top_k)->capture_default_str();
  mine->add_option("--merge-threshold", mine_cfg.merge_threshold)->capture_default_str();
  mine->add_option("--association-floor", mine_cfg.association_floor)->capture_default_str();
  mine->add_option("--min-frequency", mine_cfg.min_frequency)->capture_default_str();
  mine->add_option("--out", mine_out)->capture_default_str();

  // build-graph
  auto* graph = app.add_subcommand("build-graph", "Dump per-record observation graphs");
  fs::path graph_records, graph_lexicon, graph_ngrams, graph_out = "graphs.jsonl";
  graph->add_option("--records", graph_records)->required()->check(CLI::ExistingFile);
  graph->add_option("--lexicon", graph_lexicon)->required()->check(CLI::ExistingFile);
  graph->add_option("--ngrams", graph_ngrams)->required()->check(CLI::ExistingFile);
  graph->add_option("--out", graph_out)->capture_default_str();

  // shared config options
  std::string config_path, preset = "toy";
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--preset", preset, "toy, iu or mimic (when no --config)")
        ->capture_default_str();
  };

  auto* tp = app.add_subcommand("train-planner", "Train the observation planner");
  add_config(tp);
  fs::path planner_out;
  tp->add_option("--out", planner_out, "Checkpoint (default <output_dir>/planner.ckpt)");

  auto* tg = app.add_subcommand("train-generator", "Train the report generator");
  add_config(tg);
  std::string plans_mode = "gold";
  fs::path tg_planner, tg_ngrams, generator_out;
  tg->add_option("--plans", plans_mode, "Graph source for training")
      ->check(CLI::IsMember({"gold", "predicted"}))
      ->capture_default_str();
  tg->add_option("--planner", tg_planner, "Planner checkpoint for --plans predicted");
  tg->add_option("--ngrams", tg_ngrams, "Mined n-grams (default: output dir or mine)");
  tg->add_option("--out", generator_out, "Checkpoint (default <output_dir>/generator.ckpt)");

  auto* gen = app.add_subcommand("generate", "Generate reports for a record file");
  fs::path gen_planner, gen_generator, gen_ngrams, gen_input, gen_out = "predictions.jsonl";
  BeamConfig gen_beam;
  gen->add_option("--planner", gen_planner, "Planner checkpoint (full model)")
      ->check(CLI::ExistingFile);
  gen->add_option("--generator", gen_generator)->required()->check(CLI::ExistingFile);
  gen->add_option("--ngrams", gen_ngrams)->check(CLI::ExistingFile);
  gen->add_option("--input", gen_input)->required()->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out)->capture_default_str();
  gen->add_option("--beam-size", gen_beam.beam_size)->capture_default_str();
  gen->add_option("--max-steps", gen_beam.max_steps)->capture_default_str();

  auto* ev = app.add_subcommand("evaluate", "Score predictions against gold records");
  fs::path ev_pred, ev_gold, ev_lexicon, ev_json;
  ev->add_option("--pred", ev_pred)->required()->check(CLI::ExistingFile);
  ev->add_option("--gold", ev_gold)->required()->check(CLI::ExistingFile);
  ev->add_option("--lexicon", ev_lexicon)->required()->check(CLI::ExistingFile);
  ev->add_option("--json", ev_json, "Also write the metrics as JSON here");

  auto* sweep = app.add_subcommand("sweep-k", "Held-out metrics for several K");
  add_config(sweep);
  std::vector<std::size_t> sweep_ks;
  std::vector<std::uint64_t> sweep_seeds;
  sweep->add_option("--k", sweep_ks, "K values (default from config)")->delimiter(',');
  sweep->add_option("--seeds", sweep_seeds, "Seeds (default from config)")->delimiter(',');

  auto* run = app.add_subcommand("run", "Run the whole pipeline");
  add_config(run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  set_verbose(verbose);

  try {
    if (*toy) {
      const ToyCorpus corpus = make_toy_corpus(toy_opts);
      write_records(toy_records, corpus.records);
      write_lexicon(toy_lexicon, corpus.lexicon);
      std::cout << "wrote " << corpus.records.size() << " records to " << toy_records << '\n';
    } else if (*mine) {
      const auto records = read_records(mine_records);
      const MinedNgrams mined = mine_ngrams(records, mine_cfg);
      write_mined(mine_out, mined);
      std::cout << "wrote " << mine_out << '\n';
    } else if (*graph) {
      const auto records = read_records(graph_records);
      const auto lexicon = read_lexicon(graph_lexicon);
      const auto mined = read_mined(graph_ngrams);
      std::ofstream out(graph_out);
      if (!out) throw DataError("cannot write " + graph_out.string());
      for (const auto& r : records) {
        const auto plan = extract_plan(r, lexicon);
        if (plan.empty()) continue;
        out << "{\"id\":\"" << r.id << "\",\"graph\":" << graph_to_json(build_graph(plan, mined))
            << "}\n";
      }
      std::cout << "wrote " << graph_out << '\n';
    } else if (*tp) {
      const PipelineConfig cfg = resolve_config(config_path, preset);
      cfg.validate();
      const Dataset data = load_dataset(cfg);
      PlannerTraining history;
      const Planner planner = train_planner_stage(cfg, data, &history);
      if (planner_out.empty()) {
        fs::create_directories(cfg.output_dir);
        planner_out = cfg.output_dir / "planner.ckpt";
      }
      save_checkpoint(planner_out, planner.to_bundle());
      for (const auto& e : history.epochs) {
        std::cout << "epoch " << e.epoch << " loss " << e.loss;
        if (e.evaluated) std::cout << " micro-F1 " << e.micro_f1 << " macro-F1 " << e.macro_f1;
        std::cout << '\n';
      }
      std::cout << "wrote " << planner_out << '\n';
    } else if (*tg) {
      const PipelineConfig cfg = resolve_config(config_path, preset);
      cfg.validate();
      const Dataset data = load_dataset(cfg);
      const MinedNgrams mined = mined_for(cfg, data, tg_ngrams.string());
      std::vector<std::vector<Observation>> plans;
      if (plans_mode == "predicted") {
        const fs::path p = tg_planner.empty() ? cfg.output_dir / "planner.ckpt" : tg_planner;
        const Planner planner = Planner::from_bundle(load_checkpoint(p));
        plans = predicted_plans(data.train, planner, cfg.beam);
      } else {
        plans = gold_plans(data.train, data.lexicon);
      }
      std::vector<GeneratorEpoch> history;
      const Generator generator = train_generator_stage(cfg, data, mined, plans, &history);
      if (generator_out.empty()) {
        fs::create_directories(cfg.output_dir);
        generator_out = cfg.output_dir / "generator.ckpt";
      }
      save_checkpoint(generator_out, generator.to_bundle());
      for (const auto& e : history) {
        std::cout << "epoch " << e.epoch << " loss " << e.loss << " L_r " << e.report_nll
                  << " L_d " << e.prune_loss << '\n';
      }
      std::cout << "wrote " << generator_out << '\n';
    } else if (*gen) {
      const Generator generator = Generator::from_bundle(load_checkpoint(gen_generator));
      std::optional<Planner> planner;
      MinedNgrams mined;
      if (generator.config().use_plan) {
        if (gen_planner.empty() || gen_ngrams.empty()) {
          throw ConfigError("generate: the full model needs --planner and --ngrams");
        }
        planner.emplace(Planner::from_bundle(load_checkpoint(gen_planner)));
        mined = read_mined(gen_ngrams);
      }
      const auto records = read_records(gen_input);
      const auto predictions = generate_reports(records, planner ? &*planner : nullptr,
                                                generator, mined, gen_beam);
      write_predictions(gen_out, predictions);
      std::cout << "wrote " << predictions.size() << " reports to " << gen_out << '\n';
    } else if (*ev) {
      const auto predictions = read_predictions(ev_pred);
      const auto gold = read_records(ev_gold);
      const auto lexicon = read_lexicon(ev_lexicon);
      const MetricReport m = evaluate_predictions(predictions, gold, lexicon);
      std::cout << m.to_text();
      if (!ev_json.empty()) {
        std::ofstream(ev_json) << m.to_json() << '\n';
      }
    } else if (*sweep) {
      const PipelineConfig cfg = resolve_config(config_path, preset);
      const auto ks = sweep_ks.empty() ? cfg.sweep_k : sweep_ks;
      const auto seeds = sweep_seeds.empty() ? cfg.sweep_seeds : sweep_seeds;
      std::cout << sweep_table(sweep_k(cfg, ks, seeds));
    } else if (*run) {
      const PipelineConfig cfg = resolve_config(config_path, preset);
      const PipelineResult result = run_pipeline(cfg);
      std::cout << result.metrics.to_text() << "artifacts in " << result.output_dir << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}
