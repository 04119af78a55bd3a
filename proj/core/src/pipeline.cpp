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

#include "obsgen/pipeline.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>

#include "json.hpp"
#include "obsgen/checkpoint.hpp"
#include "obsgen/errors.hpp"
#include "obsgen/logging.hpp"
#include "obsgen/toy_corpus.hpp"

namespace obsgen {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& text, const std::string& key) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

template <class T>
void parse_value(const std::string& text, T& out, const std::string& key,
                 const fs::path& base) {
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1" || text == "yes") {
      out = true;
    } else if (text == "false" || text == "0" || text == "no") {
      out = false;
    } else {
      throw ConfigError("config key '" + key + "': expected a boolean, got '" + text + "'");
    }
  } else if constexpr (std::is_arithmetic_v<T>) {
    out = parse_number<T>(text, key);
  } else if constexpr (std::is_same_v<T, std::string>) {
    out = text;
  } else if constexpr (std::is_same_v<T, fs::path>) {
    fs::path p(text);
    out = (text.empty() || p.is_absolute() || base.empty()) ? p : base / p;
  } else {
    out.clear();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) {
        out.push_back(parse_number<typename T::value_type>(item, key));
      }
    }
  }
}

template <class T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_arithmetic_v<T>) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, fs::path>) {
    return v.generic_string();
  } else {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ',';
      out += format_value(v[i]);
    }
    return out;
  }
}

struct Key {
  std::string section;
  std::string name;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&, const fs::path&)> set;
};

template <class Ref>
Key key(std::string section, std::string name, Ref ref) {
  const std::string full = section + "." + name;
  return {section, name,
          [ref](const PipelineConfig& c) { return format_value(ref(c)); },
          [ref, full](PipelineConfig& c, const std::string& v, const fs::path& base) {
            parse_value(v, ref(c), full, base);
          }};
}

#define OBSGEN_KEY(section, name, member) \
  key(section, name, [](auto& c) -> auto& { return c.member; })

const std::vector<Key>& config_keys() {
  static const std::vector<Key> keys = {
      OBSGEN_KEY("run", "preset", preset),
      OBSGEN_KEY("run", "seed", seed),
      OBSGEN_KEY("run", "output_dir", output_dir),
      OBSGEN_KEY("data", "train", data.train),
      OBSGEN_KEY("data", "test", data.test),
      OBSGEN_KEY("data", "lexicon", data.lexicon),
      OBSGEN_KEY("data", "stopwords", miner.stopwords_path),
      OBSGEN_KEY("data", "min_count", data.min_count),
      OBSGEN_KEY("data", "validation_size", data.validation_size),
      OBSGEN_KEY("data", "toy_size", data.toy_size),
      OBSGEN_KEY("data", "toy_test_size", data.toy_test_size),
      OBSGEN_KEY("data", "toy_seed", data.toy_seed),
      OBSGEN_KEY("data", "toy_vocab_size", data.toy_vocab_size),
      OBSGEN_KEY("data", "toy_noise", data.toy_noise),
      OBSGEN_KEY("miner", "top_k", miner.top_k),
      OBSGEN_KEY("miner", "merge_threshold", miner.merge_threshold),
      OBSGEN_KEY("miner", "association_floor", miner.association_floor),
      OBSGEN_KEY("miner", "min_frequency", miner.min_frequency),
      OBSGEN_KEY("miner", "smoothing", miner.smoothing),
      OBSGEN_KEY("model", "hidden", layer.hidden),
      OBSGEN_KEY("model", "num_heads", layer.num_heads),
      OBSGEN_KEY("model", "ffn", layer.ffn),
      OBSGEN_KEY("model", "dropout", layer.dropout),
      OBSGEN_KEY("model", "max_regions", max_regions),
      OBSGEN_KEY("planner", "encoder_layers", planner.encoder_layers),
      OBSGEN_KEY("planner", "decoder_layers", planner.decoder_layers),
      OBSGEN_KEY("planner", "max_plan_length", planner.max_plan_length),
      OBSGEN_KEY("planner", "alpha", planner.alpha),
      OBSGEN_KEY("planner", "epochs", planner_train.epochs),
      OBSGEN_KEY("planner", "batch_size", planner_train.batch_size),
      OBSGEN_KEY("planner", "learning_rate", planner_train.learning_rate),
      OBSGEN_KEY("planner", "weight_decay", planner_train.weight_decay),
      OBSGEN_KEY("planner", "max_grad_norm", planner_train.max_grad_norm),
      OBSGEN_KEY("planner", "eval_every", planner_train.eval_every),
      OBSGEN_KEY("generator", "graph_layers", generator.graph_layers),
      OBSGEN_KEY("generator", "align_layers", generator.align_layers),
      OBSGEN_KEY("generator", "decoder_layers", generator.decoder_layers),
      OBSGEN_KEY("generator", "max_report_length", generator.max_report_length),
      OBSGEN_KEY("generator", "max_plan_positions", generator.max_plan_positions),
      OBSGEN_KEY("generator", "beta", generator.beta),
      OBSGEN_KEY("generator", "prune_threshold", generator.prune_threshold),
      OBSGEN_KEY("generator", "prune_weight", generator.prune_weight),
      OBSGEN_KEY("generator", "use_plan", generator.use_plan),
      OBSGEN_KEY("generator", "gold_prune_mask", generator.gold_prune_mask),
      OBSGEN_KEY("generator", "tie_embeddings", generator.tie_embeddings),
      OBSGEN_KEY("generator", "epochs", generator_train.epochs),
      OBSGEN_KEY("generator", "batch_size", generator_train.batch_size),
      OBSGEN_KEY("generator", "learning_rate", generator_train.learning_rate),
      OBSGEN_KEY("generator", "weight_decay", generator_train.weight_decay),
      OBSGEN_KEY("generator", "max_grad_norm", generator_train.max_grad_norm),
      OBSGEN_KEY("decode", "beam_size", beam.beam_size),
      OBSGEN_KEY("decode", "max_steps", beam.max_steps),
      OBSGEN_KEY("decode", "length_exponent", beam.length_exponent),
      OBSGEN_KEY("sweep", "k", sweep_k),
      OBSGEN_KEY("sweep", "seeds", sweep_seeds),
  };
  return keys;
}

#undef OBSGEN_KEY

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void apply_env_override(PipelineConfig& cfg) {
  if (const char* dir = std::getenv(kOutputDirEnv); dir != nullptr && *dir != '\0') {
    cfg.output_dir = dir;
  }
}

template <class F>
auto run_stage(const std::string& name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const ConfigError& e) {
    throw ConfigError("stage " + name + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("stage " + name + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError("stage " + name + ": " + e.what());
  }
}

std::size_t feature_dim_of(std::span<const ReportRecord> records) {
  if (records.empty()) throw DataError("no records");
  const std::size_t dim = records.front().features.rank() == 2
                              ? records.front().features.cols()
                              : 0;
  for (const auto& r : records) {
    if (r.features.rank() != 2 || r.features.cols() != dim || dim == 0) {
      throw DataError("record " + r.id + " has missing or inconsistent features");
    }
  }
  return dim;
}

nlohmann::ordered_json plan_json(std::span<const Observation> plan) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& o : plan) arr.push_back(o.key());
  return arr;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

PipelineConfig PipelineConfig::from_preset(std::string_view name) {
  PipelineConfig c;
  c.preset = std::string(name);
  c.layer = LayerConfig{512, 8, 512, 0.1};
  c.planner.encoder_layers = 3;
  c.planner.decoder_layers = 3;
  c.planner.alpha = 0.5;
  c.generator.graph_layers = 2;
  c.generator.align_layers = 3;
  c.generator.decoder_layers = 3;
  c.planner_train.batch_size = 32;
  c.generator_train.batch_size = 32;
  c.planner_train.learning_rate = 1e-4;
  c.generator_train.learning_rate = 1e-4;
  c.beam.beam_size = 4;
  c.miner.top_k = 30;
  if (name == "iu") {
    c.beam.max_steps = 64;
    c.generator.beta = 2.0;
    c.planner_train.epochs = 15;
    c.generator_train.epochs = 15;
  } else if (name == "mimic") {
    c.beam.max_steps = 104;
    c.generator.beta = 5.0;
    c.planner_train.epochs = 3;
    c.generator_train.epochs = 5;
  } else if (name == "toy") {
    c.beam.max_steps = 32;
    c.generator.beta = 2.0;
    c.layer = LayerConfig{32, 4, 64, 0.1};
    c.max_regions = 16;
    c.planner.encoder_layers = 1;
    c.planner.decoder_layers = 1;
    c.generator.graph_layers = 1;
    c.generator.align_layers = 1;
    c.generator.decoder_layers = 1;
    c.generator.max_report_length = 64;
    c.planner_train.epochs = 60;
    c.generator_train.epochs = 60;
    c.planner_train.batch_size = 8;
    c.generator_train.batch_size = 8;
    c.planner_train.learning_rate = 2e-3;
    c.generator_train.learning_rate = 2e-3;
    c.planner_train.eval_every = 0;
    c.miner.top_k = 16;
    c.output_dir = "obsgen-toy-out";
  } else {
    throw ConfigError("unknown preset '" + std::string(name) +
                      "' (expected toy, iu or mimic)");
  }
  return c;
}

void PipelineConfig::apply_ini(std::string_view text, const fs::path& base_dir) {
  std::map<std::string, const Key*> index;
  for (const auto& k : config_keys()) index[k.section + "." + k.name] = &k;

  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(line_no) + ": bad section header");
      }
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string name = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    auto it = index.find(section + "." + name);
    if (it == index.end()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" +
                        section + "." + name + "'");
    }
    it->second->set(*this, value, base_dir);
  }
}

std::string PipelineConfig::to_ini() const {
  std::string out;
  std::string section;
  for (const auto& k : config_keys()) {
    if (k.section != section) {
      if (!section.empty()) out += '\n';
      section = k.section;
      out += "[" + section + "]\n";
    }
    out += k.name + " = " + k.get(*this) + "\n";
  }
  return out;
}

void PipelineConfig::validate() const {
  layer.validate();
  if (miner.top_k == 0) throw ConfigError("miner.top_k must be >= 1");
  beam.validate();
  if (planner_train.batch_size == 0 || generator_train.batch_size == 0) {
    throw ConfigError("batch_size must be >= 1");
  }
  if (data.train.empty()) {
    if (data.toy_size < 10) throw ConfigError("data.toy_size must be >= 10");
    if (data.toy_test_size >= data.toy_size) {
      throw ConfigError("data.toy_test_size must be smaller than data.toy_size");
    }
  } else {
    for (const auto& p : {data.train, data.test, data.lexicon, miner.stopwords_path}) {
      if (!p.empty() && !fs::exists(p)) throw ConfigError("path does not exist: " + p.string());
    }
    if (data.lexicon.empty()) throw ConfigError("data.lexicon is required with data.train");
  }
  planner_config(1);
  generator_config(1);
}

PlannerConfig PipelineConfig::planner_config(std::size_t feature_dim) const {
  PlannerConfig c = planner;
  c.layer = layer;
  c.feature_dim = feature_dim;
  c.max_regions = max_regions;
  c.validate();
  return c;
}

GeneratorConfig PipelineConfig::generator_config(std::size_t feature_dim) const {
  GeneratorConfig c = generator;
  c.layer = layer;
  c.feature_dim = feature_dim;
  c.max_regions = max_regions;
  c.validate();
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  const std::string text = read_file(path);
  PipelineConfig probe;
  probe.apply_ini(text, path.parent_path());
  PipelineConfig cfg = PipelineConfig::from_preset(probe.preset);
  cfg.apply_ini(text, path.parent_path());
  apply_env_override(cfg);
  return cfg;
}

PipelineConfig preset_pipeline_config(std::string_view preset) {
  PipelineConfig cfg = PipelineConfig::from_preset(preset);
  apply_env_override(cfg);
  return cfg;
}

Dataset load_dataset(const PipelineConfig& cfg) {
  Dataset d;
  if (cfg.data.train.empty()) {
    ToyCorpusOptions opts;
    opts.size = cfg.data.toy_size;
    opts.seed = cfg.data.toy_seed;
    opts.vocab_size = cfg.data.toy_vocab_size;
    opts.noise = cfg.data.toy_noise;
    ToyCorpus toy = make_toy_corpus(opts);
    const std::size_t n_train = toy.records.size() - cfg.data.toy_test_size;
    d.train.assign(toy.records.begin(), toy.records.begin() + static_cast<std::ptrdiff_t>(n_train));
    d.test.assign(toy.records.begin() + static_cast<std::ptrdiff_t>(n_train), toy.records.end());
    d.lexicon = std::move(toy.lexicon);
  } else {
    d.train = read_records(cfg.data.train);
    if (!cfg.data.test.empty()) d.test = read_records(cfg.data.test);
    d.lexicon = read_lexicon(cfg.data.lexicon);
  }
  if (cfg.data.validation_size > 0) {
    if (cfg.data.validation_size >= d.train.size()) {
      throw ConfigError("data.validation_size leaves no training records");
    }
    const auto split = d.train.end() - static_cast<std::ptrdiff_t>(cfg.data.validation_size);
    d.validation.assign(split, d.train.end());
    d.train.erase(split, d.train.end());
  }
  if (d.train.empty()) throw DataError("training split is empty");
  return d;
}

std::vector<std::vector<Observation>> gold_plans(std::span<const ReportRecord> records,
                                                 const MentionLexicon& lexicon) {
  std::vector<std::vector<Observation>> plans;
  plans.reserve(records.size());
  for (const auto& r : records) plans.push_back(extract_plan(r, lexicon).observations);
  return plans;
}

std::vector<std::vector<Observation>> predicted_plans(std::span<const ReportRecord> records,
                                                      const Planner& planner,
                                                      const BeamConfig& beam) {
  std::vector<std::vector<Observation>> plans;
  plans.reserve(records.size());
  for (const auto& r : records) {
    auto plan = planner.predict(r.features, beam);
    if (plan.empty()) plan.push_back({Category::kNoFinding, Polarity::kPositive});
    plans.push_back(std::move(plan));
  }
  return plans;
}

std::vector<PlannerExample> planner_examples(std::span<const ReportRecord> records,
                                             const MentionLexicon& lexicon) {
  std::vector<PlannerExample> out;
  for (const auto& r : records) {
    out.push_back({r.features, extract_plan(r, lexicon).observations});
  }
  return out;
}

std::vector<GeneratorExample> generator_examples(
    std::span<const ReportRecord> records,
    std::span<const std::vector<Observation>> plans, const MinedNgrams& mined,
    bool use_plan) {
  if (use_plan && plans.size() != records.size()) {
    throw DataError("generator_examples: plan count does not match records");
  }
  std::vector<GeneratorExample> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    GeneratorExample ex;
    ex.features = records[i].features;
    ex.report = records[i].tokens;
    if (use_plan) {
      std::vector<Observation> plan = plans[i];
      if (plan.empty()) plan.push_back({Category::kNoFinding, Polarity::kPositive});
      ex.graph = build_graph(plan, mined);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Prediction> generate_reports(std::span<const ReportRecord> records,
                                         const Planner* planner,
                                         const Generator& generator,
                                         const MinedNgrams& mined,
                                         const BeamConfig& beam) {
  const bool use_plan = generator.config().use_plan;
  if (use_plan && planner == nullptr) {
    throw ConfigError("generate: a planner is required for the full model");
  }
  std::vector<std::vector<Observation>> plans;
  if (use_plan) plans = predicted_plans(records, *planner, beam);
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    Prediction p;
    p.id = records[i].id;
    ObservationGraph graph;
    if (use_plan) {
      p.plan = plans[i];
      graph = build_graph(p.plan, mined);
    }
    p.tokens = generator.generate(records[i].features, graph, beam);
    out.push_back(std::move(p));
  }
  return out;
}

void write_predictions(const fs::path& path, std::span<const Prediction> predictions) {
  std::string text;
  for (const auto& p : predictions) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["plan"] = plan_json(p.plan);
    j["tokens"] = p.tokens;
    text += j.dump() + "\n";
  }
  write_text(path, text);
}

std::vector<Prediction> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions " + path.string());
  std::vector<Prediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Prediction p;
      p.id = j.at("id").get<std::string>();
      for (const auto& k : j.value("plan", nlohmann::json::array())) {
        p.plan.push_back(Observation::parse(k.get<std::string>()));
      }
      const auto& tokens = j.at("tokens");
      p.tokens = tokens.is_string() ? split_whitespace(tokens.get<std::string>())
                                    : tokens.get<std::vector<std::string>>();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

MetricReport evaluate_predictions(std::span<const Prediction> predictions,
                                  std::span<const ReportRecord> gold,
                                  const MentionLexicon& lexicon) {
  std::map<std::string, const ReportRecord*> by_id;
  for (const auto& r : gold) by_id[r.id] = &r;
  std::vector<std::vector<std::string>> candidates, references;
  std::vector<std::vector<Observation>> gold_obs;
  for (const auto& p : predictions) {
    auto it = by_id.find(p.id);
    if (it == by_id.end()) throw DataError("prediction for unknown record '" + p.id + "'");
    candidates.push_back(p.tokens);
    references.push_back(it->second->tokens);
    gold_obs.push_back(labels_to_observations(it->second->labels));
  }
  return evaluate_reports(candidates, references, gold_obs, lexicon);
}

Planner train_planner_stage(const PipelineConfig& cfg, const Dataset& data,
                            PlannerTraining* history) {
  Planner planner(cfg.planner_config(feature_dim_of(data.train)), cfg.seed);
  TrainConfig tc = cfg.planner_train;
  tc.seed = cfg.seed;
  const auto train = planner_examples(data.train, data.lexicon);
  const auto val = planner_examples(data.validation, data.lexicon);
  auto h = train_planner(planner, train, val, tc, cfg.beam);
  if (history) *history = std::move(h);
  return planner;
}

Generator train_generator_stage(const PipelineConfig& cfg, const Dataset& data,
                                const MinedNgrams& mined,
                                std::span<const std::vector<Observation>> train_plans,
                                std::vector<GeneratorEpoch>* history) {
  const GeneratorConfig gc = cfg.generator_config(feature_dim_of(data.train));
  Generator generator(gc, build_vocab(data.train, static_cast<int>(cfg.data.min_count)),
                      cfg.seed + 1);
  TrainConfig tc = cfg.generator_train;
  tc.seed = cfg.seed + 1;
  const auto examples = generator_examples(data.train, train_plans, mined, gc.use_plan);
  auto h = train_generator(generator, examples, tc);
  if (history) *history = std::move(h);
  return generator;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  run_stage("config", [&] { cfg.validate(); });
  PipelineResult result;
  result.output_dir = cfg.output_dir;
  fs::create_directories(cfg.output_dir);
  auto out = [&](const std::string& name) {
    const fs::path p = cfg.output_dir / name;
    result.artifacts.push_back(p);
    return p;
  };

  const Dataset data = run_stage("load", [&] { return load_dataset(cfg); });
  run_stage("load", [&] {
    write_records(out("records_train.jsonl"), data.train);
    if (!data.validation.empty()) write_records(out("records_validation.jsonl"), data.validation);
    if (!data.test.empty()) write_records(out("records_test.jsonl"), data.test);
    write_lexicon(out("lexicon.json"), data.lexicon);
  });

  const MinedNgrams mined = run_stage("mine", [&] {
    auto m = mine_ngrams(data.train, cfg.miner);
    write_mined(out("ngrams.json"), m);
    return m;
  });

  const auto train_plans = run_stage("build-graph", [&] {
    auto plans = gold_plans(data.train, data.lexicon);
    std::string text;
    for (std::size_t i = 0; i < plans.size(); ++i) {
      if (plans[i].empty()) continue;
      nlohmann::ordered_json j;
      j["id"] = data.train[i].id;
      j["graph"] = nlohmann::ordered_json::parse(graph_to_json(build_graph(plans[i], mined)));
      text += j.dump() + "\n";
    }
    write_text(out("graphs_train.jsonl"), text);
    return plans;
  });

  const Planner planner = run_stage("train-planner", [&] {
    PlannerTraining history;
    Planner p = train_planner_stage(cfg, data, &history);
    save_checkpoint(out("planner.ckpt"), p.to_bundle());
    std::string text;
    for (const auto& e : history.epochs) {
      nlohmann::ordered_json j;
      j["epoch"] = e.epoch;
      j["loss"] = e.loss;
      if (e.evaluated) {
        j["micro_f1"] = e.micro_f1;
        j["macro_f1"] = e.macro_f1;
      }
      text += j.dump() + "\n";
    }
    write_text(out("planner_metrics.jsonl"), text);
    return p;
  });

  const Generator generator = run_stage("train-generator", [&] {
    std::vector<GeneratorEpoch> history;
    Generator g = train_generator_stage(cfg, data, mined, train_plans, &history);
    save_checkpoint(out("generator.ckpt"), g.to_bundle());
    std::string text;
    for (const auto& e : history) {
      nlohmann::ordered_json j;
      j["epoch"] = e.epoch;
      j["loss"] = e.loss;
      j["report_nll"] = e.report_nll;
      j["prune_loss"] = e.prune_loss;
      text += j.dump() + "\n";
    }
    write_text(out("generator_metrics.jsonl"), text);
    return g;
  });

  const auto& eval_records = data.test.empty() ? data.train : data.test;
  const auto predictions = run_stage("generate", [&] {
    auto p = generate_reports(eval_records, &planner, generator, mined, cfg.beam);
    write_predictions(out("predictions.jsonl"), p);
    return p;
  });

  result.metrics = run_stage("evaluate", [&] {
    auto m = evaluate_predictions(predictions, eval_records, data.lexicon);
    write_text(out("metrics.json"), m.to_json() + "\n");
    write_text(out("metrics.txt"), m.to_text());
    return m;
  });

  run_stage("manifest", [&] {
    // The manifest lives in output_dir, so the path itself is left out.
    PipelineConfig recorded = cfg;
    recorded.output_dir.clear();
    const std::string ini = recorded.to_ini();
    nlohmann::ordered_json j;
    j["config_hash"] = hex64(fnv1a64(ini));
    j["seeds"] = {{"run", cfg.seed},
                  {"planner", cfg.seed},
                  {"generator", cfg.seed + 1},
                  {"toy_corpus", cfg.data.toy_seed}};
    j["config"] = ini;
    auto artifacts = nlohmann::ordered_json::object();
    for (const auto& p : result.artifacts) {
      std::ifstream in(p, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      artifacts[p.filename().string()] = hex64(fnv1a64(ss.str()));
    }
    j["artifacts"] = std::move(artifacts);
    write_text(cfg.output_dir / "manifest.json", j.dump(2) + "\n");
  });
  return result;
}

std::vector<SweepRow> sweep_k(const PipelineConfig& cfg, std::span<const std::size_t> ks,
                              std::span<const std::uint64_t> seeds) {
  if (ks.empty() || seeds.empty()) throw ConfigError("sweep-k needs K values and seeds");
  cfg.validate();
  const Dataset data = load_dataset(cfg);
  const auto& eval_records = data.test.empty() ? data.train : data.test;
  MinerConfig mc = cfg.miner;
  mc.top_k = *std::max_element(ks.begin(), ks.end());
  if (std::find(ks.begin(), ks.end(), 0) != ks.end()) throw ConfigError("K must be >= 1");
  const MinedNgrams mined_max = mine_ngrams(data.train, mc);
  const auto train_plans = gold_plans(data.train, data.lexicon);

  std::vector<SweepRow> rows;
  for (std::uint64_t seed : seeds) {
    PipelineConfig run = cfg;
    run.seed = seed;
    const Planner planner = train_planner_stage(run, data);
    for (std::size_t k : ks) {
      const MinedNgrams mined = mined_max.truncated(k);
      const Generator generator = train_generator_stage(run, data, mined, train_plans);
      const auto predictions =
          generate_reports(eval_records, &planner, generator, mined, run.beam);
      rows.push_back({k, seed, evaluate_predictions(predictions, eval_records, data.lexicon)});
      log_info("sweep K=" + std::to_string(k) + " seed=" + std::to_string(seed) +
               " BLEU-2 " + std::to_string(rows.back().metrics.bleu.bleu[1]));
    }
  }
  return rows;
}

std::string sweep_table(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "K\tseed\tBLEU-1\tBLEU-2\tBLEU-3\tBLEU-4\tROUGE-L\tCE-F1\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu\t%llu\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f\n", r.k,
                  static_cast<unsigned long long>(r.seed), r.metrics.bleu.bleu[0],
                  r.metrics.bleu.bleu[1], r.metrics.bleu.bleu[2], r.metrics.bleu.bleu[3],
                  r.metrics.rouge_l, r.metrics.ce.f1);
    out << buf;
  }
  return out.str();
}

}  // namespace obsgen
