#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfr/data.hpp"
#include "cfr/metrics.hpp"
#include "cfr/network.hpp"
#include "cfr/trainer.hpp"

namespace cfr {
class ConfigFile;
}

namespace cfr::experiment {

enum class Estimator { cfr, ols1, ols2, knn };
enum class MetricsSetting { within_sample, out_of_sample, both };
enum class SelectionCriterion { pehe_nn, policy_risk, validation_objective };

struct DataSource {
  bool synthetic = true;
  SyntheticConfig synthetic_cfg;
  std::filesystem::path csv_path;
  CsvSchema schema;
  // Control units removed by induce_imbalance before splitting; 0 disables.
  Index imbalance_remove = 0;
  double imbalance_q = 0.0;
};

struct ExperimentConfig {
  DataSource data;
  SplitRatios splits;
  nn::NetworkArchitecture model;  // input_dim is taken from the data
  Estimator estimator = Estimator::cfr;
  Index knn_k = 1;
  train::TrainConfig train;
  MetricsSetting metrics_setting = MetricsSetting::both;
  SelectionCriterion selection = SelectionCriterion::pehe_nn;
  int n_realizations = 20;
  std::uint64_t base_seed = 1;
  int threads = 0;  // 0: hardware concurrency

  void validate() const;
  /// Sections [data], [splits], [model], [train], [ipm], [experiment].
  static ExperimentConfig from_config(const ConfigFile& cfg);
};

std::string to_string(Estimator e);
std::string to_string(SelectionCriterion c);

/// Seeds for realization r, all derived from base_seed.
struct RealizationSeeds {
  std::uint64_t data;
  std::uint64_t imbalance;
  std::uint64_t split;
  std::uint64_t model;
};
RealizationSeeds realization_seeds(std::uint64_t base_seed, int realization);

/// Dataset of one realization before splitting (generated or loaded, then
/// optionally made more imbalanced).
ObservationalDataset realization_data(const ExperimentConfig& cfg, int realization);
DatasetSplit realization_split(const ExperimentConfig& cfg, int realization);

/// Trains the CFR network for one realization's split.
train::TrainResult train_cfr(const ExperimentConfig& cfg, const DatasetSplit& split, int realization);

/// A fitted estimator of any kind.
struct FittedModel {
  std::function<metrics::ItePredictions(const Matrix&)> predict;
  // Objective on the validation split (CFR: best early-stopping value;
  // baselines: group-weighted factual loss).
  double validation_objective = 0.0;
  std::optional<nn::Network> network;
  std::optional<train::TrainingTrace> trace;
};

FittedModel fit_model(const ExperimentConfig& cfg, const DatasetSplit& split, int realization);

/// Model-selection score computed from the validation split only.
double selection_score(const ExperimentConfig& cfg, const FittedModel& model,
                       const ObservationalDataset& valid);

struct RealizationResult {
  int realization = 0;
  double selection_score = 0.0;
  std::vector<metrics::EvaluationReport> reports;
};

struct Aggregate {
  metrics::Setting setting = metrics::Setting::out_of_sample;
  std::string metric;
  double mean = 0.0;
  double std_error = 0.0;
  int count = 0;
};

/// Mean and standard error (sample standard deviation / sqrt(n); 0 for n = 1).
std::pair<double, double> mean_and_std_error(const std::vector<double>& values);

struct ExperimentReport {
  std::vector<RealizationResult> realizations;
  std::vector<Aggregate> aggregates;
  double mean_selection_score = 0.0;

  std::optional<Aggregate> find(metrics::Setting setting, const std::string& metric) const;
  std::string to_json() const;
  /// One row per (realization, setting).
  std::string to_csv() const;
  static std::string csv_header();
};

struct RunHooks {
  // Applied to the test split after the model is fitted and scored, right
  // before out-of-sample evaluation.
  std::function<void(ObservationalDataset&)> transform_test;
};

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunHooks& hooks = {});

// ---------------------------------------------------------------------------
// Sweeps

/// Candidate values per hyperparameter; empty lists keep the base value.
struct SweepGrid {
  std::vector<double> alpha;
  std::vector<Index> rep_layer_count;
  std::vector<Index> head_layer_count;
  std::vector<Index> rep_dim;
  std::vector<Index> head_dim;
  std::vector<Index> batch_size;
  // 0: evaluate every grid point; otherwise a seeded random subset of this
  // size (the config default: strategy = random, n_trials = 20).
  int random_trials = 0;

  /// Table 2 search space.
  static SweepGrid table2();
  static SweepGrid from_config(const ConfigFile& cfg);
};

/// {10^(k/2)} for k = -10..6.
std::vector<double> table2_alpha_grid();

struct TrialPoint {
  double alpha = 0.0;
  Index rep_layer_count = 0;
  Index head_layer_count = 0;
  Index rep_dim = 0;
  Index head_dim = 0;
  Index batch_size = 0;
};

/// Grid points in lexicographic order (alpha slowest).
std::vector<TrialPoint> expand_grid(const SweepGrid& grid, const ExperimentConfig& base);
ExperimentConfig apply_point(const ExperimentConfig& base, const TrialPoint& p);

struct TrialRecord {
  int id = 0;
  TrialPoint point;
  bool failed = false;
  std::string error;
  double selection_score = 0.0;
  ExperimentReport report;
};

struct SweepReport {
  std::vector<TrialRecord> trials;  // sorted by id
  int best_trial = -1;

  const TrialRecord& best() const;
  std::string to_json() const;
  std::string to_csv() const;
};

/// Every trial shares the base seed, hence the same data realizations.
/// Individual failures are recorded; throws if every trial fails.
SweepReport run_sweep(const ExperimentConfig& cfg, const SweepGrid& grid,
                      const RunHooks& hooks = {});

// ---------------------------------------------------------------------------
// Imbalance vs. IPM strength

struct Figure2Row {
  double q = 0.0;
  double alpha = 0.0;
  double median_sqrt_pehe = 0.0;
  double relative_to_alpha0 = 0.0;
};

struct Figure2Data {
  std::vector<double> q_values;
  std::vector<double> alpha_grid;
  // Out-of-sample sqrt(PEHE) indexed [q][alpha][realization].
  std::vector<std::vector<std::vector<double>>> sqrt_pehe;
  std::vector<Figure2Row> rows;

  std::string to_csv() const;
};

/// For each q and realization: generate, induce imbalance with that q, split
/// and train CFR for every alpha (same initialization across alpha). The
/// relative column is median(alpha) / median(alpha = 0) within each q.
Figure2Data emit_figure2_data(const ExperimentConfig& cfg, const std::vector<double>& alpha_grid,
                              const std::vector<double>& q_values);

/// Runs job(i) for i in [0, n) on up to `threads` workers (0: hardware
/// concurrency). The first exception is rethrown after all workers finish.
void parallel_for(int n, int threads, const std::function<void(int)>& job);

}  // namespace cfr::experiment
