// coldguess: generate, train, score, eval, bench, repro.
//
// Exit codes: 0 success, 1 runtime failure (I/O, format, checkpoint, training),
// 2 bad configuration or arguments.

#include "coldguess/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <sstream>

using namespace coldguess;

namespace {

// Flag values; unset optionals leave the config untouched.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> model, mode, optimizer;
  std::optional<std::size_t> epochs, batch_size, hidden;
  std::optional<double> lr;
  std::optional<std::size_t> sellers, products, offers;
  std::optional<std::uint64_t> generator_seed;
  bool print_config = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Experiment seed (overrides CG_SEED and the config)");
  cmd->add_flag("--print-config", o.print_config, "Print the effective config and exit");
}

void add_model_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--model", o.model, "coldguess, naive, sign, rgcn_expanded or tabular");
  cmd->add_option("--mode", o.mode, "nine_binary or multi_task");
  cmd->add_option("--optimizer", o.optimizer, "adam or sgd");
  cmd->add_option("--epochs", o.epochs, "Training epochs for every model");
  cmd->add_option("--batch-size", o.batch_size, "Offers per mini-batch");
  cmd->add_option("--hidden", o.hidden, "Hidden width");
  cmd->add_option("--lr", o.lr, "Learning rate");
}

void add_generator_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--sellers", o.sellers, "Seller count");
  cmd->add_option("--products", o.products, "Product count");
  cmd->add_option("--offers", o.offers, "Offer count");
  cmd->add_option("--generator-seed", o.generator_seed, "Generator seed");
}

// Precedence: flags > CG_SEED > config file > defaults.
ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  apply_seed_override(c, std::getenv("CG_SEED"));
  auto wrap = [](const char* flag, auto&& f) {
    try {
      f();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string(flag) + ": " + e.what());
    }
  };
  if (o.seed) c.seed = *o.seed;
  if (o.model) wrap("--model", [&] { c.model.kind = parse_model_kind(*o.model); });
  if (o.mode) wrap("--mode", [&] { c.model.mode = parse_train_mode(*o.mode); });
  if (o.optimizer) wrap("--optimizer", [&] { c.model.optimizer = parse_optimizer(*o.optimizer); });
  if (o.epochs) {
    c.model.epochs = *o.epochs;
    c.model.epochs_by_model.clear();
  }
  if (o.batch_size) c.model.batch_size = *o.batch_size;
  if (o.hidden) c.model.hidden = *o.hidden;
  if (o.lr) c.model.lr = *o.lr;
  if (o.sellers) c.generator.sellers = *o.sellers;
  if (o.products) c.generator.products = *o.products;
  if (o.offers) c.generator.offers = *o.offers;
  if (o.generator_seed) c.generator.seed = *o.generator_seed;
  check_config(c);
  return c;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

nlohmann::json report_line(const EvalReport& r) {
  return {{"gmean", optional_json(r.gmean, 6)}, {"gmean_delta_pcp", optional_json(r.gmean_delta_pcp, 1)}};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"ColdGuess: offer-risk classification on seller-product graphs under cold start"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "coldguess 1.0");
  Overrides o;
  Logger log;

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic graph bundle with labels");
  std::string gen_out;
  std::optional<std::uint64_t> snapshot;
  add_common(gen, o);
  add_generator_flags(gen, o);
  gen->add_option("-o,--out", gen_out, "Output bundle directory")->required();
  gen->add_option("--snapshot", snapshot, "Snapshot index (default: the config's train snapshot)");

  // train
  auto* train = app.add_subcommand("train", "Train a model on a graph bundle");
  std::string train_graph, train_out;
  add_common(train, o);
  add_model_flags(train, o);
  train->add_option("-g,--graph", train_graph, "Graph bundle directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("-o,--out", train_out, "Checkpoint path")->required();

  // score
  auto* score = app.add_subcommand("score", "Score the evaluation set of a scenario");
  std::string score_ckpt, score_graph, score_out, scenario_file, scenario_name, save_scenario, export_table;
  std::optional<std::uint64_t> scen_seed;
  add_common(score, o);
  score->add_option("-m,--checkpoint", score_ckpt, "Checkpoint path")->required()->check(CLI::ExistingFile);
  score->add_option("-g,--graph", score_graph, "Graph bundle directory")->required()->check(CLI::ExistingDirectory);
  score->add_option("-o,--out", score_out, "Scores CSV")->required();
  auto* sf = score->add_option("-s,--scenario", scenario_file, "Scenario spec (JSON)")->check(CLI::ExistingFile);
  score->add_option("--scenario-name", scenario_name, "Sample a scenario instead: G_o, G_no, G_ns or G_nsnp")->excludes(sf);
  score->add_option("--scenario-seed", scen_seed, "Seed for --scenario-name (default: derived from the experiment seed)");
  score->add_option("--save-scenario", save_scenario, "Write the scenario spec used");
  score->add_option("--export-table", export_table, "Write the masked listing feature table of the evaluation set");

  // eval
  auto* eval = app.add_subcommand("eval", "Per-class ROC-AUC report of a scores file");
  std::string eval_scores, eval_labels, eval_baseline, eval_out;
  eval->add_option("-s,--scores", eval_scores, "Scores CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("-l,--labels", eval_labels, "Graph bundle directory or labels.csv")->required()->check(CLI::ExistingPath);
  eval->add_option("-b,--baseline", eval_baseline, "Baseline scores CSV over the same offers")->check(CLI::ExistingFile);
  eval->add_option("-o,--out", eval_out, "Output prefix (writes <prefix>.csv and <prefix>.json)")->required();

  // bench
  auto* bench = app.add_subcommand("bench", "Time training epochs and inference against edge count");
  std::string bench_out;
  std::vector<std::size_t> bench_sizes;
  std::vector<std::string> bench_tasks;
  std::optional<std::size_t> bench_repeats;
  add_common(bench, o);
  add_model_flags(bench, o);
  bench->add_option("-o,--out", bench_out, "Timings CSV (default: <output_dir>/bench.csv)");
  bench->add_option("--sizes", bench_sizes, "Edge counts")->delimiter(',');
  bench->add_option("--tasks", bench_tasks, "train_epoch and/or inference")->delimiter(',');
  bench->add_option("--repeats", bench_repeats, "Timed runs per size");

  // repro
  auto* repro = app.add_subcommand("repro", "Generate, train all models, score all scenarios, compare");
  std::string repro_out;
  add_common(repro, o);
  add_model_flags(repro, o);
  add_generator_flags(repro, o);
  repro->add_option("-o,--out", repro_out, "Output directory (default: the config's output_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*eval) {
      const EvalReport r = cmd_eval(eval_scores, eval_labels,
                                    eval_baseline.empty() ? std::nullopt : std::optional<fs::path>(eval_baseline), eval_out, log);
      print_json(report_json(r));
      return 0;
    }

    ExperimentConfig c = resolve(o);
    if (*bench) {
      if (o.model) c.bench.model = c.model.kind;
      if (!bench_sizes.empty()) c.bench.sizes = bench_sizes;
      if (!bench_tasks.empty()) {
        c.bench.tasks.clear();
        for (const auto& t : bench_tasks) c.bench.tasks.push_back(detail::parse_bench_task(t));
      }
      if (bench_repeats) c.bench.repeats = *bench_repeats;
      check_config(c);
    }
    if (o.print_config) {
      print_json(c.to_json());
      return 0;
    }

    if (*gen) {
      const auto r = cmd_generate(c, gen_out, snapshot.value_or(c.train_snapshot), log);
      print_json({{"dir", gen_out}, {"sellers", r.sellers}, {"products", r.products}, {"offers", r.offers},
                  {"seller_edges", r.seller_edges}});
    } else if (*train) {
      const auto r = cmd_train(train_graph, c, train_out, log);
      print_json({{"checkpoint", train_out}, {"model", to_string(c.model.kind)}, {"epochs", r.loss_curve.size()},
                  {"final_loss", r.loss_curve.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.loss_curve.back())}});
    } else if (*score) {
      ScoreOptions opt;
      if (!scenario_file.empty()) opt.scenario_file = scenario_file;
      if (!scenario_name.empty()) opt.scenario = parse_scenario(scenario_name);
      opt.scenario_seed = scen_seed.value_or(scenario_seed(c));
      opt.coldstart = c.coldstart;
      if (!save_scenario.empty()) opt.save_scenario = save_scenario;
      if (!export_table.empty()) opt.export_table = export_table;
      if (!o.config.empty()) opt.expected_config = c;
      const auto t = cmd_score(score_ckpt, score_graph, opt, score_out, log);
      print_json({{"scores", score_out}, {"offers", t.offers.size()}});
    } else if (*bench) {
      const fs::path out = bench_out.empty() ? fs::path(c.output_dir) / "bench.csv" : fs::path(bench_out);
      const auto r = cmd_bench(c, out, log);
      nlohmann::json fits;
      for (const auto& [task, res] : r.results)
        fits[to_string(task)] = {{"slope", res.fit.slope}, {"intercept", res.fit.intercept}, {"r2", res.fit.r2},
                                 {"growth_exponent", growth_exponent(res)}};
      print_json({{"timings", out.string()}, {"fits", fits}});
    } else if (*repro) {
      const fs::path out = repro_out.empty() ? fs::path(c.output_dir) : fs::path(repro_out);
      const auto r = cmd_repro(c, out, log);
      nlohmann::json table;
      for (const auto& [sc, models] : r.reports)
        for (const auto& [k, rep] : models) table[to_string(sc)][to_string(k)] = report_line(rep);
      print_json({{"dir", out.string()}, {"gmean", table}});
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "coldguess: configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "coldguess: error: " << e.what() << '\n';
    return 1;
  }
}
