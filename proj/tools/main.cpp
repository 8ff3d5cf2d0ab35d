#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cfr/config_file.hpp"
#include "cfr/data.hpp"
#include "cfr/diagnostics.hpp"
#include "cfr/error.hpp"
#include "cfr/experiment.hpp"
#include "cfr/network.hpp"

namespace fs = std::filesystem;
using namespace cfr;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

struct Options {
  std::string config;
  std::optional<long long> seed;
  std::string out = ".";
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw Error("failed writing '" + path.string() + "'");
}

// Appends rows to a CSV table, writing the header only when the file is new.
void append_csv(const fs::path& path, const std::string& table) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::string body = table;
  if (!fresh) body = table.substr(table.find('\n') + 1);
  std::ofstream f(path, std::ios::binary | std::ios::app);
  if (!f) throw Error("cannot open '" + path.string() + "' for appending");
  f << body;
}

struct Loaded {
  ConfigFile file;
  experiment::ExperimentConfig cfg;
};

Loaded load(const Options& o) {
  Loaded l;
  if (!o.config.empty()) {
    try {
      l.file = ConfigFile::load(o.config);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(o.config + ": " + e.what());
    }
  }
  l.cfg = experiment::ExperimentConfig::from_config(l.file);
  if (o.seed) {
    if (*o.seed < 0) throw ConfigError("--seed must be >= 0");
    l.cfg.base_seed = static_cast<std::uint64_t>(*o.seed);
  }
  l.cfg.validate();
  fs::create_directories(o.out);
  return l;
}

void cmd_generate(const Options& o) {
  const Loaded l = load(o);
  const ObservationalDataset ds = experiment::realization_data(l.cfg, 0);
  write_csv(ds, fs::path(o.out) / "data.csv");
  std::printf("wrote %s (%ld rows, %ld treated)\n", (fs::path(o.out) / "data.csv").c_str(),
              static_cast<long>(ds.size()), static_cast<long>(ds.treated_count()));
}

void cmd_train(const Options& o) {
  const Loaded l = load(o);
  const DatasetSplit s = experiment::realization_split(l.cfg, 0);
  const train::TrainResult r = experiment::train_cfr(l.cfg, s, 0);
  nn::save(r.network, fs::path(o.out) / "network.txt");
  r.trace.write_csv(fs::path(o.out) / "trace.csv");
  std::printf("best epoch %d, validation objective %.6g\n", r.trace.best_epoch,
              r.trace.best_valid_objective);
}

void cmd_evaluate(const Options& o) {
  const Loaded l = load(o);
  const experiment::ExperimentReport rep = experiment::run_experiment(l.cfg);
  write_file(fs::path(o.out) / "report.json", rep.to_json() + "\n");
  write_file(fs::path(o.out) / "results.csv", rep.to_csv());
  for (const auto& a : rep.aggregates)
    std::printf("%-13s %-11s %.6g +- %.6g\n", metrics::to_string(a.setting).c_str(), a.metric.c_str(),
                a.mean, a.std_error);
}

void cmd_sweep(const Options& o) {
  const Loaded l = load(o);
  const experiment::SweepGrid grid = experiment::SweepGrid::from_config(l.file);
  const experiment::SweepReport rep = experiment::run_sweep(l.cfg, grid);
  write_file(fs::path(o.out) / "sweep.json", rep.to_json() + "\n");
  append_csv(fs::path(o.out) / "sweep.csv", rep.to_csv());
  const auto& best = rep.best();
  std::printf("%zu trials, best trial %d (selection score %.6g)\n", rep.trials.size(), best.id,
              best.selection_score);
}

void cmd_figure2(const Options& o) {
  const Loaded l = load(o);
  std::vector<double> alphas;
  if (l.file.get_string("figure2", "alpha", "") == "table2") {
    alphas = experiment::table2_alpha_grid();
    alphas.insert(alphas.begin(), 0.0);
  } else {
    alphas = l.file.get_doubles("figure2", "alpha", {0.0, 0.01, 0.1, 1.0});
  }
  const std::vector<double> qs = l.file.get_doubles("figure2", "q", {0.0, 0.5, 1.0});
  experiment::ExperimentConfig cfg = l.cfg;
  if (cfg.data.imbalance_remove == 0) cfg.data.imbalance_remove = 347;
  const experiment::Figure2Data data = experiment::emit_figure2_data(cfg, alphas, qs);
  write_file(fs::path(o.out) / "figure2.csv", data.to_csv());
  std::fputs(data.to_csv().c_str(), stdout);
}

void cmd_bound(const Options& o) {
  const Loaded l = load(o);
  if (l.cfg.train.loss_kind != LossKind::squared)
    throw ArgumentError("the bound diagnostic requires squared loss");
  const DatasetSplit s = experiment::realization_split(l.cfg, 0);
  const train::TrainResult r = experiment::train_cfr(l.cfg, s, 0);
  const double b_phi = l.file.get_double("bound", "b_phi", 1.0);
  std::optional<double> sigma;
  if (l.file.has("bound", "sigma_y_squared")) sigma = l.file.get_double("bound", "sigma_y_squared", 0.0);
  const diagnostics::BoundReport rep =
      diagnostics::empirical_bound(r.network, s.train, l.cfg.train.ipm, b_phi, sigma);
  write_file(fs::path(o.out) / "bound.json", rep.to_json() + "\n");
  std::printf("%s\n", rep.to_json().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual regression: train, evaluate and diagnose ITE estimators"};
  app.require_subcommand(1);
  Options opts;

  auto add = [&](const std::string& name, const std::string& help, void (*fn)(const Options&)) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config, "Configuration file");
    sub->add_option("--seed", opts.seed, "Override experiment.base_seed");
    sub->add_option("--out", opts.out, "Output directory")->capture_default_str();
    sub->callback([fn, &opts] { fn(opts); });
  };
  add("generate", "Write the configured dataset (realization 0) as CSV", cmd_generate);
  add("train", "Train CFR on realization 0 and save the network and trace", cmd_train);
  add("evaluate", "Run every realization and report metrics", cmd_evaluate);
  add("sweep", "Hyperparameter search selected on validation data", cmd_sweep);
  add("figure2", "Error vs. IPM strength across imbalance levels", cmd_figure2);
  add("bound", "Empirical PEHE bound diagnostic on the training split", cmd_bound);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  } catch (const ConfigError& e) {
    std::cerr << "error: configuration: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return 0;
}
