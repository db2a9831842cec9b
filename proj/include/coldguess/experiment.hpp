#pragma once

// Experiment configuration and the commands behind the coldguess CLI.
//
// Every command is a plain function that reads its inputs, writes its
// artifacts, and emits line-delimited JSON events through a Logger. Artifacts
// never contain timings, so reruns with the same config are byte-identical.

#include "coldguess/checkpoint.hpp"
#include "coldguess/coldstart.hpp"
#include "coldguess/eval.hpp"
#include "coldguess/graph_io.hpp"
#include "coldguess/model.hpp"
#include "coldguess/sampling.hpp"

#include <nlohmann/json.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace coldguess {

namespace fs = std::filesystem;

inline constexpr int kExperimentConfigVersion = 1;

/// Bad configuration: unknown key, wrong type, out-of-range value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  ModelKind kind = ModelKind::coldguess;
  TrainMode mode = TrainMode::multi_task;
  std::size_t hidden = 64;
  std::size_t layers = 3;
  std::size_t expanded_layers = 6;
  std::size_t sign_hops = 3;
  double dropout = 0.0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 3e-3;
  double weight_decay = 0.0;
  std::size_t epochs = 12;
  // Per-model epoch budgets; models not listed use `epochs`. The tabular
  // models take 20 ms an epoch and keep improving well past 12; the expanded
  // RGCN costs 30 s an epoch.
  std::map<ModelKind, std::size_t> epochs_by_model = {
      {ModelKind::tabular, 30}, {ModelKind::naive, 30}, {ModelKind::sign, 30}, {ModelKind::rgcn_expanded, 6}};
  std::size_t batch_size = 1024;

  std::size_t epochs_for(ModelKind k) const {
    const auto it = epochs_by_model.find(k);
    return it == epochs_by_model.end() ? epochs : it->second;
  }
};

struct BenchConfig {
  std::vector<std::size_t> sizes = {10000, 20000, 40000, 80000};
  std::vector<BenchTask> tasks = {BenchTask::train_epoch, BenchTask::inference};
  ModelKind model = ModelKind::coldguess;
  std::size_t warmup = 1;
  std::size_t repeats = 3;
};

struct ExperimentConfig {
  int version = kExperimentConfigVersion;
  std::uint64_t seed = 1;
  GeneratorConfig generator;
  std::uint64_t train_snapshot = 0;
  std::uint64_t test_snapshot = 1;
  ModelConfig model;
  std::vector<ModelKind> models = {ModelKind::tabular, ModelKind::naive, ModelKind::sign, ModelKind::rgcn_expanded,
                                   ModelKind::coldguess};
  std::vector<Scenario> scenarios = {kAllScenarios.begin(), kAllScenarios.end()};
  ColdStartConfig coldstart;
  BenchConfig bench;
  std::string output_dir = "coldguess_out";

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
};

// Seed streams derived from the experiment seed.
inline std::uint64_t init_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 1); }
inline std::uint64_t shuffle_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 2); }
inline std::uint64_t scenario_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 3); }

namespace detail {

/// Reads fields of one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& field) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      j_.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where(key) + ": bad value " + j_.at(key).dump());
    }
  }

  /// Parses `key` with `f(json)`, mapping any failure to a ConfigError naming the key.
  template <class F>
  void with(const char* key, F&& f) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      f(j_.at(key));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + where(key.c_str()) + "'");
  }

  std::string where(const char* key = nullptr) const {
    if (!key) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class T, class Parse>
std::vector<T> parse_list(const nlohmann::json& j, Parse&& parse) {
  if (!j.is_array()) throw ConfigError("expected a list");
  std::vector<T> out;
  for (const auto& v : j) out.push_back(parse(v.get<std::string>()));
  return out;
}

inline BenchTask parse_bench_task(std::string_view s) {
  if (s == "train_epoch") return BenchTask::train_epoch;
  if (s == "inference") return BenchTask::inference;
  throw std::invalid_argument("unknown benchmark task '" + std::string(s) + "' (expected train_epoch or inference)");
}

}  // namespace detail

inline nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json models_j = nlohmann::json::array(), scenarios_j = nlohmann::json::array(), tasks_j = nlohmann::json::array();
  for (ModelKind k : models) models_j.push_back(to_string(k));
  for (Scenario s : scenarios) scenarios_j.push_back(to_string(s));
  nlohmann::json epochs_j = nlohmann::json::object();
  for (const auto& [k, n] : model.epochs_by_model) epochs_j[to_string(k)] = n;
  for (BenchTask t : bench.tasks) tasks_j.push_back(to_string(t));
  return {{"version", version},
          {"seed", seed},
          {"generator", generator.to_json()},
          {"train_snapshot", train_snapshot},
          {"test_snapshot", test_snapshot},
          {"model",
           {{"kind", to_string(model.kind)},
            {"mode", to_string(model.mode)},
            {"hidden", model.hidden},
            {"layers", model.layers},
            {"expanded_layers", model.expanded_layers},
            {"sign_hops", model.sign_hops},
            {"dropout", model.dropout},
            {"optimizer", to_string(model.optimizer)},
            {"lr", model.lr},
            {"weight_decay", model.weight_decay},
            {"epochs", model.epochs},
            {"epochs_by_model", epochs_j},
            {"batch_size", model.batch_size}}},
          {"models", models_j},
          {"scenarios", scenarios_j},
          {"coldstart",
           {{"minority_classes", coldstart.minority_classes},
            {"minority_rate", coldstart.minority_rate},
            {"other_rate", coldstart.other_rate}}},
          {"bench",
           {{"sizes", bench.sizes},
            {"tasks", tasks_j},
            {"model", to_string(bench.model)},
            {"warmup", bench.warmup},
            {"repeats", bench.repeats}}},
          {"output_dir", output_dir}};
}

inline void check_config(const ExperimentConfig& c) {
  if (c.version != kExperimentConfigVersion)
    throw ConfigError("config 'version': unsupported version " + std::to_string(c.version) + " (expected " +
                      std::to_string(kExperimentConfigVersion) + ")");
  try {
    check_generator_config(c.generator);
  } catch (const GeneratorError& e) {
    throw ConfigError(std::string("config 'generator': ") + e.what());
  }
  const ModelConfig& m = c.model;
  if (m.hidden == 0) throw ConfigError("config 'model.hidden' must be positive");
  if (m.layers == 0 || m.expanded_layers == 0) throw ConfigError("config 'model.layers' and 'model.expanded_layers' must be positive");
  if (m.batch_size == 0) throw ConfigError("config 'model.batch_size' must be positive");
  if (!(m.lr >= 0.0)) throw ConfigError("config 'model.lr' must be non-negative");
  if (!(m.dropout >= 0.0 && m.dropout < 1.0)) throw ConfigError("config 'model.dropout' must lie in [0, 1)");
  if (c.models.empty()) throw ConfigError("config 'models' must name at least one model");
  if (c.scenarios.empty()) throw ConfigError("config 'scenarios' must name at least one scenario");
  for (std::size_t k : c.coldstart.minority_classes)
    if (k >= kClassCount) throw ConfigError("config 'coldstart.minority_classes': class " + std::to_string(k) + " out of range");
  for (double r : {c.coldstart.minority_rate, c.coldstart.other_rate})
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("config 'coldstart' rates must lie in [0, 1]");
  if (c.bench.repeats == 0) throw ConfigError("config 'bench.repeats' must be positive");
  if (c.train_snapshot == c.test_snapshot) throw ConfigError("config 'train_snapshot' and 'test_snapshot' must differ");
}

/// Keys present in `j` override the defaults; unknown keys are errors.
inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  detail::ObjectReader top(j, "");
  top.get("version", c.version);
  if (!j.contains("version")) throw ConfigError("config 'version' is required");
  if (c.version != kExperimentConfigVersion)
    throw ConfigError("config 'version': unsupported version " + std::to_string(c.version));
  top.get("seed", c.seed);
  top.with("generator", [&](const nlohmann::json& g) {
    try {
      c.generator = GeneratorConfig::from_json(g);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config 'generator': ") + e.what());
    }
  });
  top.get("train_snapshot", c.train_snapshot);
  top.get("test_snapshot", c.test_snapshot);
  top.with("model", [&](const nlohmann::json& mj) {
    detail::ObjectReader r(mj, "model");
    r.with("kind", [&](const nlohmann::json& v) { c.model.kind = parse_model_kind(v.get<std::string>()); });
    r.with("mode", [&](const nlohmann::json& v) { c.model.mode = parse_train_mode(v.get<std::string>()); });
    r.get("hidden", c.model.hidden);
    r.get("layers", c.model.layers);
    r.get("expanded_layers", c.model.expanded_layers);
    r.get("sign_hops", c.model.sign_hops);
    r.get("dropout", c.model.dropout);
    r.with("optimizer", [&](const nlohmann::json& v) { c.model.optimizer = parse_optimizer(v.get<std::string>()); });
    r.get("lr", c.model.lr);
    r.get("weight_decay", c.model.weight_decay);
    r.get("epochs", c.model.epochs);
    r.with("epochs_by_model", [&](const nlohmann::json& v) {
      if (!v.is_object()) throw ConfigError("config 'model.epochs_by_model': expected an object");
      c.model.epochs_by_model.clear();
      for (const auto& [name, n] : v.items()) {
        if (!n.is_number_unsigned()) throw ConfigError("config 'model.epochs_by_model." + name + "': bad value " + n.dump());
        c.model.epochs_by_model[parse_model_kind(name)] = n.get<std::size_t>();
      }
    });
    r.get("batch_size", c.model.batch_size);
    r.finish();
  });
  top.with("models", [&](const nlohmann::json& v) { c.models = detail::parse_list<ModelKind>(v, parse_model_kind); });
  top.with("scenarios", [&](const nlohmann::json& v) { c.scenarios = detail::parse_list<Scenario>(v, parse_scenario); });
  top.with("coldstart", [&](const nlohmann::json& cj) {
    detail::ObjectReader r(cj, "coldstart");
    r.get("minority_classes", c.coldstart.minority_classes);
    r.get("minority_rate", c.coldstart.minority_rate);
    r.get("other_rate", c.coldstart.other_rate);
    r.finish();
  });
  top.with("bench", [&](const nlohmann::json& bj) {
    detail::ObjectReader r(bj, "bench");
    r.get("sizes", c.bench.sizes);
    r.with("tasks", [&](const nlohmann::json& v) { c.bench.tasks = detail::parse_list<BenchTask>(v, detail::parse_bench_task); });
    r.with("model", [&](const nlohmann::json& v) { c.bench.model = parse_model_kind(v.get<std::string>()); });
    r.get("warmup", c.bench.warmup);
    r.get("repeats", c.bench.repeats);
    r.finish();
  });
  top.get("output_dir", c.output_dir);
  top.finish();
  check_config(c);
  return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
  nlohmann::json j;
  try {
    const auto bytes = io::read_file(path);
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return ExperimentConfig::from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// CG_SEED overrides the config seed; the value must be a decimal integer.
inline void apply_seed_override(ExperimentConfig& c, const char* value) {
  if (!value) return;
  const std::string_view s(value);
  std::uint64_t seed = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size())
    throw ConfigError("CG_SEED: expected a non-negative integer, got '" + std::string(s) + "'");
  c.seed = seed;
}

/// Keeps freed tensor buffers in the heap instead of returning them to the
/// kernel after every op; training allocates and frees large blocks constantly.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
#endif
}

// Logging

/// Line-delimited JSON events, by default on stderr.
class Logger {
 public:
  explicit Logger(std::ostream* out = &std::cerr) : out_(out), start_(std::chrono::steady_clock::now()) {}

  void operator()(const std::string& event, nlohmann::json fields = nlohmann::json::object()) const {
    if (!out_) return;
    fields["event"] = event;
    fields["wall_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    *out_ << fields.dump() << '\n';
    out_->flush();
  }

 private:
  std::ostream* out_;
  std::chrono::steady_clock::time_point start_;
};

// Shared steps

inline ModelSpec model_spec(const ExperimentConfig& c, ModelKind kind, const HeteroGraph& g) {
  ModelSpec s = spec_for_graph(kind, c.model.mode, g);
  s.hidden = s.edge_hidden = s.classifier_hidden = c.model.hidden;
  s.layers = c.model.layers;
  s.expanded_layers = c.model.expanded_layers;
  s.sign_hops = c.model.sign_hops;
  s.dropout = c.model.dropout;
  return s;
}

inline TrainConfig train_config(const ExperimentConfig& c, ModelKind kind) {
  TrainConfig t;
  t.epochs = c.model.epochs_for(kind);
  t.batch_size = c.model.batch_size;
  t.lr = c.model.lr;
  t.optimizer = c.model.optimizer;
  t.weight_decay = c.model.weight_decay;
  t.seed = shuffle_seed(c);
  return t;
}

/// Initializes and trains one model on every labeled offer of `g`.
inline Model train_configured_model(const ExperimentConfig& c, ModelKind kind, const HeteroGraph& g, const Logger& log,
                                    TrainReport* report = nullptr) {
  Model m = init_model(model_spec(c, kind, g), init_seed(c));
  const auto offers = labeled_offers(g);
  log("train_start", {{"model", to_string(kind)}, {"mode", to_string(c.model.mode)}, {"offers", offers.size()},
                      {"epochs", c.model.epochs_for(kind)}});
  const TrainReport r = train_model(m, g, offers, train_config(c, kind), [&](const EpochReport& e) {
    log("epoch", {{"model", to_string(kind)}, {"epoch", e.epoch}, {"loss", e.loss}, {"seconds", e.seconds}});
  });
  log("train_end", {{"model", to_string(kind)}, {"seconds", r.seconds}});
  if (report) *report = r;
  return m;
}

/// Shortest round-trip text for a float.
inline std::string format_float(float v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// offer_idx,p0..p8 with one row per scored offer.
inline std::string scores_csv(std::span<const std::uint32_t> offers, const Matrix<float>& scores) {
  std::string out = "offer_idx";
  for (std::size_t c = 0; c < scores.cols; ++c) out += ",p" + std::to_string(c);
  out += '\n';
  for (std::size_t i = 0; i < offers.size(); ++i) {
    out += std::to_string(offers[i]);
    for (std::size_t c = 0; c < scores.cols; ++c) out += "," + format_float(scores(i, c));
    out += '\n';
  }
  return out;
}

struct ScoreTable {
  std::vector<std::uint32_t> offers;
  Matrix<float> scores;
};

inline ScoreTable read_scores_csv(const fs::path& path) {
  const auto bytes = io::read_file(path);
  const auto lines = detail::csv_lines(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  const std::string name = path.string();
  if (lines.empty() || detail::split_csv(lines[0]).size() != kClassCount + 1 || detail::split_csv(lines[0])[0] != "offer_idx")
    throw io::FormatError(name + ": expected header offer_idx,p0..p8");
  ScoreTable t;
  t.scores = Matrix<float>(lines.size() - 1, kClassCount);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string where = name + " line " + std::to_string(i + 1);
    const auto f = detail::split_csv(lines[i]);
    if (f.size() != kClassCount + 1) throw io::FormatError(where + ": expected 10 fields");
    t.offers.push_back(detail::parse_int<std::uint32_t>(f[0], where));
    for (std::size_t c = 0; c < kClassCount; ++c) {
      float v = 0.0f;
      const auto [end, ec] = std::from_chars(f[c + 1].data(), f[c + 1].data() + f[c + 1].size(), v);
      if (ec != std::errc() || end != f[c + 1].data() + f[c + 1].size())
        throw io::FormatError(where + ": bad score '" + std::string(f[c + 1]) + "'");
      t.scores(i - 1, c) = v;
    }
  }
  return t;
}

inline Matrix<float> label_rows(const Matrix<float>& labels, std::span<const std::uint32_t> offers) {
  Matrix<float> z(offers.size(), labels.cols);
  for (std::size_t i = 0; i < offers.size(); ++i) {
    if (offers[i] >= labels.rows) throw io::FormatError("offer " + std::to_string(offers[i]) + " has no label row");
    for (std::size_t c = 0; c < labels.cols; ++c) z(i, c) = labels(offers[i], c);
  }
  return z;
}

inline std::string auc_text(const std::optional<double>& a) { return a ? format_fixed(*a, 6) : "undefined"; }
inline std::string pcp_text(const std::optional<double>& d) { return d ? format_fixed(*d, 1) : "undefined"; }

inline nlohmann::json optional_json(const std::optional<double>& v, int digits) {
  if (!v) return nullptr;
  const double scale = std::pow(10.0, digits);
  return std::round(*v * scale) / scale;
}

/// class,auc,delta_pcp with a final gmean row.
inline std::string report_csv(const EvalReport& r) {
  std::string out = "class,auc,delta_pcp\n";
  for (std::size_t c = 0; c < r.auc.size(); ++c)
    out += std::to_string(c) + "," + auc_text(r.auc[c]) + "," + (r.delta_pcp.empty() ? "" : pcp_text(r.delta_pcp[c])) + "\n";
  out += "gmean," + auc_text(r.gmean) + "," + (r.delta_pcp.empty() ? "" : pcp_text(r.gmean_delta_pcp)) + "\n";
  return out;
}

inline nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json auc = nlohmann::json::array(), delta = nlohmann::json::array();
  for (const auto& a : r.auc) auc.push_back(optional_json(a, 6));
  for (const auto& d : r.delta_pcp) delta.push_back(optional_json(d, 1));
  nlohmann::json j = {{"scenario", r.scenario}, {"listings", r.listings}, {"seed", r.seed}, {"auc", auc},
                      {"gmean", optional_json(r.gmean, 6)}};
  if (!r.delta_pcp.empty()) {
    j["delta_pcp"] = delta;
    j["gmean_delta_pcp"] = optional_json(r.gmean_delta_pcp, 1);
  }
  return j;
}

// Commands

struct GenerateResult {
  std::size_t sellers = 0, products = 0, offers = 0, seller_edges = 0;
};

/// Writes snapshot `snapshot` of the configured generator as a graph bundle,
/// with labels and the planted communities (communities.csv).
inline GenerateResult cmd_generate(const ExperimentConfig& c, const fs::path& out_dir, std::uint64_t snapshot, const Logger& log) {
  const GeneratedGraph gen = generate_synthetic_graph_with_truth(c.generator, snapshot);
  const HeteroGraph& g = gen.graph;
  save_graph(g, out_dir);
  std::string truth = "node_type,node_idx,community\n";
  for (std::size_t s = 0; s < gen.seller_community.size(); ++s)
    truth += "seller," + std::to_string(s) + "," + std::to_string(gen.seller_community[s]) + "\n";
  for (std::size_t p = 0; p < gen.product_community.size(); ++p)
    truth += "product," + std::to_string(p) + "," + std::to_string(gen.product_community[p]) + "\n";
  io::write_file(out_dir / "communities.csv", truth);
  io::write_file(out_dir / "generator.json", nlohmann::json{{"generator", c.generator.to_json()}, {"snapshot", snapshot}}.dump(2) + "\n");
  const HeteroGraph back = load_graph(out_dir);
  if (back.offer_count() != g.offer_count() || !(back.offer_features() == g.offer_features()))
    throw std::runtime_error(out_dir.string() + ": written bundle does not read back identically");
  GenerateResult r{g.seller_count(), g.product_count(), g.offer_count(), g.seller_edge_count()};
  log("generate", {{"dir", out_dir.string()}, {"snapshot", snapshot}, {"sellers", r.sellers}, {"products", r.products},
                   {"offers", r.offers}, {"seller_edges", r.seller_edges}});
  return r;
}

/// Trains `c.model.kind` on the bundle's labeled offers and saves a checkpoint.
inline TrainReport cmd_train(const fs::path& graph_dir, const ExperimentConfig& c, const fs::path& out_checkpoint, const Logger& log) {
  const HeteroGraph g = load_graph(graph_dir);
  TrainReport report;
  const Model m = train_configured_model(c, c.model.kind, g, log, &report);
  if (out_checkpoint.has_parent_path()) fs::create_directories(out_checkpoint.parent_path());
  save_checkpoint(m, out_checkpoint);
  const Model back = load_checkpoint(out_checkpoint, m.spec);
  for (std::size_t h = 0; h < m.heads.size(); ++h)
    if (!(back.heads[h] == m.heads[h])) throw std::runtime_error(out_checkpoint.string() + ": checkpoint does not read back identically");
  log("checkpoint", {{"path", out_checkpoint.string()}, {"config_hash", io::hex(config_hash(m.spec))}});
  return report;
}

struct ScoreOptions {
  std::optional<fs::path> scenario_file;  // ScenarioSpec JSON
  std::optional<Scenario> scenario;       // sampled when no file is given
  std::uint64_t scenario_seed = 0;
  ColdStartConfig coldstart;
  std::optional<fs::path> save_scenario;
  std::optional<fs::path> export_table;  // listing feature table of the evaluation set
  /// When set, checkpoints whose architecture differs from this config's model are refused.
  std::optional<ExperimentConfig> expected_config;
};

inline ScenarioSpec read_scenario(const fs::path& path) {
  try {
    const auto bytes = io::read_file(path);
    return ScenarioSpec::from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw io::FormatError(path.string() + ": " + e.what());
  }
}

inline void write_feature_table(const HeteroGraph& g, std::span<const std::uint32_t> offers, const fs::path& path) {
  const Matrix<float> t = listing_feature_table<float>(g, offers);
  std::string out = "offer_idx";
  for (const auto& n : g.seller_columns()) out += ",seller." + n;
  for (const auto& n : g.product_columns()) out += ",product." + n;
  for (const auto& n : g.offer_columns()) out += ",offer." + n;
  out += '\n';
  for (std::size_t i = 0; i < offers.size(); ++i) {
    out += std::to_string(offers[i]);
    for (std::size_t c = 0; c < t.cols; ++c) out += "," + format_float(t(i, c));
    out += '\n';
  }
  io::write_file(path, out);
}

/// Applies the scenario's mask to the bundle and scores its evaluation set.
inline ScoreTable cmd_score(const fs::path& checkpoint, const fs::path& graph_dir, const ScoreOptions& opt,
                            const fs::path& out_csv, const Logger& log) {
  const HeteroGraph g = load_graph(graph_dir);
  std::optional<ModelSpec> expected;
  if (opt.expected_config) expected = model_spec(*opt.expected_config, opt.expected_config->model.kind, g);
  const Model m = load_checkpoint(checkpoint, expected);
  ScenarioSpec spec;
  if (opt.scenario_file) {
    spec = read_scenario(*opt.scenario_file);
  } else {
    const Scenario s = opt.scenario.value_or(Scenario::full);
    if (s != Scenario::full && !g.has_labels())
      throw GraphError(graph_dir.string() + ": sampling a cold-start scenario needs labels; pass a scenario file instead");
    spec = sample_scenario(g, s, opt.scenario_seed, opt.coldstart);
  }
  if (opt.save_scenario) io::write_file(*opt.save_scenario, spec.to_json().dump(2) + "\n");
  const ScenarioResult res = apply_scenario(g, spec);
  std::vector<std::uint32_t> offers = res.evaluation;
  if (spec.scenario == Scenario::full && !g.has_labels()) {
    offers.resize(g.offer_count());
    std::iota(offers.begin(), offers.end(), 0u);
  }
  ScoreTable t{offers, score_offers(m, res.graph, offers, res.seller_mask)};
  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  io::write_file(out_csv, scores_csv(t.offers, t.scores));
  if (opt.export_table) write_feature_table(res.graph, offers, *opt.export_table);
  if (read_scores_csv(out_csv).offers.size() != offers.size())
    throw std::runtime_error(out_csv.string() + ": written scores do not read back");
  log("score", {{"model", to_string(m.spec.kind)}, {"scenario", to_string(spec.scenario)}, {"offers", offers.size()},
                {"path", out_csv.string()}});
  return t;
}

/// Per-class report of a scores file against labels, optionally against a
/// baseline scores file over the same offers. Writes <out>.csv and <out>.json.
inline EvalReport cmd_eval(const fs::path& scores_file, const fs::path& labels_path, const std::optional<fs::path>& baseline_file,
                           const fs::path& out_prefix, const Logger& log) {
  const ScoreTable t = read_scores_csv(scores_file);
  const Matrix<float> labels = load_labels(labels_path);
  const Matrix<float> z = label_rows(labels, t.offers);
  std::optional<EvalReport> base;
  if (baseline_file) {
    const ScoreTable b = read_scores_csv(*baseline_file);
    if (b.offers != t.offers)
      throw io::FormatError(baseline_file->string() + ": baseline scores cover different offers than " + scores_file.string());
    base = per_class_report(b.scores, z);
  }
  EvalReport r = per_class_report(t.scores, z, base ? &*base : nullptr);
  r.scenario = scores_file.stem().string();
  fs::path csv = out_prefix, json = out_prefix;
  csv += ".csv";
  json += ".json";
  if (out_prefix.has_parent_path()) fs::create_directories(out_prefix.parent_path());
  io::write_file(csv, report_csv(r));
  io::write_file(json, report_json(r).dump(2) + "\n");
  log("eval", {{"scores", scores_file.string()}, {"listings", r.listings}, {"gmean", optional_json(r.gmean, 6)}});
  return r;
}

/// Generator config scaled to roughly `edges` total edges. Community size is
/// held fixed and cross-community probabilities shrink with the seller count,
/// so expected seller edges grow linearly with the scale factor.
inline GeneratorConfig scaled_generator(const GeneratorConfig& base, std::size_t edges) {
  const double s = static_cast<double>(base.sellers);
  const double per_community = s / static_cast<double>(base.communities);
  double in_pairs = static_cast<double>(base.communities) * per_community * (per_community - 1.0) / 2.0;
  double all_pairs = s * (s - 1.0) / 2.0;
  double expected = static_cast<double>(base.offers);
  for (std::size_t r = 0; r < kSellerRelationCount; ++r)
    expected += base.p_in[r] * in_pairs + base.p_out[r] * (all_pairs - in_pairs);
  const double f = static_cast<double>(edges) / expected;
  GeneratorConfig c = base;
  auto scale = [&](std::size_t n) { return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * f))); };
  c.sellers = scale(base.sellers);
  c.products = scale(base.products);
  c.offers = scale(base.offers);
  c.communities = scale(base.communities);
  for (double& p : c.p_out) p = std::min(1.0, p / f);
  return c;
}

struct BenchReport {
  std::map<BenchTask, BenchResult> results;
};

inline BenchWorkload bench_workload(const ExperimentConfig& c, BenchTask task, std::size_t edges) {
  auto g = std::make_shared<HeteroGraph>(generate_synthetic_graph(scaled_generator(c.generator, edges), c.train_snapshot));
  auto model = std::make_shared<Model>(init_model(model_spec(c, c.bench.model, *g), init_seed(c)));
  auto offers = std::make_shared<std::vector<std::uint32_t>>(labeled_offers(*g));
  BenchWorkload w;
  w.edges = g->edge_count();
  if (task == BenchTask::train_epoch) {
    TrainConfig tc = train_config(c, c.bench.model);
    tc.epochs = 1;
    w.run = [g, model, offers, tc] {
      Model copy = *model;
      train_model(copy, *g, *offers, tc);
    };
  } else {
    w.run = [g, model, offers] { (void)score_offers(*model, *g, *offers); };
  }
  return w;
}

/// Times a training epoch and whole-graph inference over the configured
/// edge counts and writes task,requested_edges,edges,seconds rows.
inline BenchReport cmd_bench(const ExperimentConfig& c, const fs::path& out_csv, const Logger& log) {
  BenchReport report;
  BenchOptions opt;
  opt.warmup = c.bench.warmup;
  opt.repeats = c.bench.repeats;
  std::string csv = "task,requested_edges,edges,seconds\n";
  for (BenchTask task : c.bench.tasks) {
    const BenchResult r = scaling_benchmark(c.bench.sizes, [&](std::size_t e) {
      log("bench_size", {{"task", to_string(task)}, {"edges", e}});
      return bench_workload(c, task, e);
    }, opt);
    for (const auto& p : r.points)
      csv += std::string(to_string(task)) + "," + std::to_string(p.requested_edges) + "," + std::to_string(p.edges) + "," +
             format_fixed(p.seconds, 6) + "\n";
    log("bench_fit", {{"task", to_string(task)}, {"slope", r.fit.slope}, {"intercept", r.fit.intercept}, {"r2", r.fit.r2},
                         {"growth_exponent", growth_exponent(r)}});
    report.results[task] = r;
  }
  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  io::write_file(out_csv, csv);
  return report;
}

struct ReproResult {
  /// reports[scenario][model]
  std::map<Scenario, std::map<ModelKind, EvalReport>> reports;
  nlohmann::json summary;
};

/// Full pipeline: generate train and test snapshots, train every configured
/// model on the train snapshot, score every scenario of the test snapshot.
///
/// Layout under `out_dir`:
///   config.json, graphs/{train,test}/, models/<model>.ckpt,
///   scenarios/<scenario>.json, scores/<model>_<scenario>.csv,
///   reports/<model>_<scenario>.csv, comparison.csv, table.csv,
///   summary.json, timings.json (the only file with wall-clock values)
inline ReproResult cmd_repro(const ExperimentConfig& c, const fs::path& out_dir, const Logger& log) {
  check_config(c);
  fs::create_directories(out_dir);
  for (const char* sub : {"models", "scenarios", "scores", "reports"}) fs::create_directories(out_dir / sub);
  io::write_file(out_dir / "config.json", c.to_json().dump(2) + "\n");
  nlohmann::json timings;

  cmd_generate(c, out_dir / "graphs" / "train", c.train_snapshot, log);
  cmd_generate(c, out_dir / "graphs" / "test", c.test_snapshot, log);
  const HeteroGraph train = load_graph(out_dir / "graphs" / "train");
  const HeteroGraph test = load_graph(out_dir / "graphs" / "test");

  // Tabular first: the other models are reported against it.
  std::vector<ModelKind> order = c.models;
  std::stable_partition(order.begin(), order.end(), [](ModelKind k) { return k == ModelKind::tabular; });
  const bool has_baseline = !order.empty() && order.front() == ModelKind::tabular;

  std::map<ModelKind, Model> models;
  for (ModelKind k : order) {
    if (models.count(k)) continue;
    TrainReport tr;
    models[k] = train_configured_model(c, k, train, log, &tr);
    save_checkpoint(models[k], out_dir / "models" / (std::string(to_string(k)) + ".ckpt"));
    timings["train_seconds"][to_string(k)] = tr.seconds;
  }

  ReproResult result;
  nlohmann::json summary = {{"seed", c.seed}, {"generator_seed", c.generator.seed}, {"baseline", has_baseline ? "tabular" : ""}};
  std::string comparison = "scenario,model,class,auc,delta_pcp\n";
  for (Scenario sc : c.scenarios) {
    const ScenarioSpec spec = sample_scenario(test, sc, scenario_seed(c), c.coldstart);
    const std::string sname = to_string(sc);
    io::write_file(out_dir / "scenarios" / (sname + ".json"), spec.to_json().dump(2) + "\n");
    const ScenarioResult res = apply_scenario(test, spec);
    const Matrix<float> z = label_rows(test.labels(), res.evaluation);
    summary["scenarios"][sname]["listings"] = res.evaluation.size();
    summary["scenarios"][sname]["new_sellers"] = spec.new_sellers.size();
    summary["scenarios"][sname]["new_products"] = spec.new_products.size();
    const EvalReport* baseline = nullptr;
    for (ModelKind k : order) {
      const auto t0 = std::chrono::steady_clock::now();
      const Matrix<float> scores = score_offers(models.at(k), res.graph, res.evaluation, res.seller_mask);
      timings["score_seconds"][sname][to_string(k)] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const std::string stem = std::string(to_string(k)) + "_" + sname;
      io::write_file(out_dir / "scores" / (stem + ".csv"), scores_csv(res.evaluation, scores));
      EvalReport r = per_class_report(scores, z, baseline);
      r.scenario = sname;
      r.seed = c.seed;
      io::write_file(out_dir / "reports" / (stem + ".csv"), report_csv(r));
      for (std::size_t cl = 0; cl < kClassCount; ++cl)
        comparison += sname + "," + to_string(k) + "," + std::to_string(cl) + "," + auc_text(r.auc[cl]) + "," +
                      (baseline ? pcp_text(r.delta_pcp[cl]) : "") + "\n";
      comparison += sname + "," + to_string(k) + ",gmean," + auc_text(r.gmean) + "," + (baseline ? pcp_text(r.gmean_delta_pcp) : "") + "\n";
      summary["scenarios"][sname]["models"][to_string(k)] = report_json(r);
      log("scenario_eval", {{"scenario", sname}, {"model", to_string(k)}, {"gmean", optional_json(r.gmean, 6)}});
      result.reports[sc][k] = std::move(r);
      if (k == ModelKind::tabular && has_baseline) baseline = &result.reports[sc][k];
    }
  }
  io::write_file(out_dir / "comparison.csv", comparison);

  // Wide table: one row per model and class, one column per scenario; cells are
  // pcp gains over the baseline (AUC for the baseline itself).
  std::string table = "model,class";
  for (Scenario sc : c.scenarios) table += std::string(",") + to_string(sc);
  table += '\n';
  for (ModelKind k : order) {
    for (std::size_t cl = 0; cl <= kClassCount; ++cl) {
      table += std::string(to_string(k)) + "," + (cl < kClassCount ? std::to_string(cl) : std::string("gmean"));
      for (Scenario sc : c.scenarios) {
        const EvalReport& r = result.reports.at(sc).at(k);
        const bool is_base = has_baseline && k == ModelKind::tabular;
        if (is_base || !has_baseline)
          table += "," + auc_text(cl < kClassCount ? r.auc[cl] : r.gmean);
        else
          table += "," + pcp_text(cl < kClassCount ? r.delta_pcp[cl] : r.gmean_delta_pcp);
      }
      table += '\n';
    }
  }
  io::write_file(out_dir / "table.csv", table);

  io::write_file(out_dir / "summary.json", summary.dump(2) + "\n");
  io::write_file(out_dir / "timings.json", timings.dump(2) + "\n");
  result.summary = std::move(summary);
  return result;
}

}  // namespace coldguess
