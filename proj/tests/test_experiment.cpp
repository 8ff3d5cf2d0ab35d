#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cfr/config_file.hpp"
#include "cfr/error.hpp"
#include "cfr/experiment.hpp"

using namespace cfr;
using namespace cfr::experiment;

namespace {

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.data.synthetic_cfg.n_units = 120;
  c.data.synthetic_cfg.n_treated_target = 40;
  c.data.synthetic_cfg.dim = 5;
  c.model.rep_layers = {8};
  c.model.head_layers = {8};
  c.train.max_epochs = 4;
  c.train.batch_size = 32;
  c.train.adam.step_size = 1e-2;
  c.train.ipm.kind = ipm::IpmKind::linear_mmd;
  c.n_realizations = 2;
  c.threads = 1;
  return c;
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Seeds, DistinctStreams) {
  const auto a = realization_seeds(1, 0);
  const auto b = realization_seeds(1, 1);
  const auto c = realization_seeds(2, 0);
  EXPECT_NE(a.data, a.split);
  EXPECT_NE(a.split, a.model);
  EXPECT_NE(a.data, b.data);
  EXPECT_NE(a.data, c.data);
  EXPECT_EQ(realization_seeds(1, 0).model, a.model);
}

TEST(Aggregate, MeanAndStandardError) {
  const auto [m, se] = mean_and_std_error({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m, 2.5);
  EXPECT_NEAR(se, std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
  const auto [m1, se1] = mean_and_std_error({7.0});
  EXPECT_EQ(m1, 7.0);
  EXPECT_EQ(se1, 0.0);
}

TEST(Experiment, Deterministic) {
  const ExperimentConfig c = tiny();
  const ExperimentReport a = run_experiment(c);
  const ExperimentReport b = run_experiment(c);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.to_csv(), b.to_csv());
  ExperimentConfig other = c;
  other.base_seed = 2;
  EXPECT_NE(run_experiment(other).to_json(), a.to_json());
}

TEST(Experiment, ThreadCountDoesNotChangeResults) {
  ExperimentConfig c = tiny();
  const std::string one = run_experiment(c).to_json();
  c.threads = 3;
  EXPECT_EQ(run_experiment(c).to_json(), one);
}

TEST(Experiment, WithinSampleRowCount) {
  ExperimentConfig c = tiny();
  c.n_realizations = 3;
  c.metrics_setting = MetricsSetting::within_sample;
  const ExperimentReport r = run_experiment(c);
  const std::string csv = r.to_csv();
  EXPECT_EQ(line_count(csv), 1u + 3u);  // header + one row per realization
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) EXPECT_NE(line.find("within_sample"), std::string::npos);
  for (const auto& rr : r.realizations) {
    ASSERT_EQ(rr.reports.size(), 1u);
    EXPECT_EQ(rr.reports[0].setting, metrics::Setting::within_sample);
  }
}

TEST(Experiment, AggregatesMatchRealizations) {
  ExperimentConfig c = tiny();
  c.n_realizations = 3;
  const ExperimentReport r = run_experiment(c);
  std::vector<double> v;
  for (const auto& rr : r.realizations)
    for (const auto& rep : rr.reports)
      if (rep.setting == metrics::Setting::out_of_sample) v.push_back(*rep.sqrt_pehe.value);
  const auto [m, se] = mean_and_std_error(v);
  const auto agg = r.find(metrics::Setting::out_of_sample, "sqrt_pehe");
  ASSERT_TRUE(agg.has_value());
  EXPECT_EQ(agg->mean, m);
  EXPECT_EQ(agg->std_error, se);
  EXPECT_EQ(agg->count, 3);
}

TEST(Experiment, Ols2RecoversNoiselessLinear) {
  ExperimentConfig c = tiny();
  c.estimator = Estimator::ols2;
  c.data.synthetic_cfg.response_surface = ResponseSurface::linear;
  c.data.synthetic_cfg.outcome_noise_std = 0.0;
  const ExperimentReport r = run_experiment(c);
  for (auto s : {metrics::Setting::within_sample, metrics::Setting::out_of_sample})
    EXPECT_LT(r.find(s, "sqrt_pehe")->mean, 1e-6);
  // The CSV carries the same numbers.
  std::istringstream in(r.to_csv());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("realization,", 0), 0u);
}

TEST(Experiment, KnnAndOls1Run) {
  ExperimentConfig c = tiny();
  c.estimator = Estimator::knn;
  c.knn_k = 3;
  EXPECT_NO_THROW(run_experiment(c));
  c.estimator = Estimator::ols1;
  EXPECT_NO_THROW(run_experiment(c));
}

TEST(Experiment, InvalidConfigRejected) {
  ExperimentConfig c = tiny();
  c.n_realizations = 0;
  EXPECT_THROW(run_experiment(c), ConfigError);
}

TEST(Sweep, SinglePointMatchesExperiment) {
  const ExperimentConfig c = tiny();
  SweepGrid g;
  g.alpha = {c.train.alpha};
  const SweepReport s = run_sweep(c, g);
  ASSERT_EQ(s.trials.size(), 1u);
  EXPECT_EQ(s.best_trial, 0);
  EXPECT_EQ(s.best().report.to_json(), run_experiment(c).to_json());
}

TEST(Sweep, Table2AlphaGridHasSeventeenTrials) {
  ExperimentConfig c = tiny();
  c.n_realizations = 1;
  c.train.max_epochs = 1;
  SweepGrid g;
  g.alpha = table2_alpha_grid();
  ASSERT_EQ(g.alpha.size(), 17u);
  EXPECT_NEAR(g.alpha.front(), 1e-5, 1e-20);
  EXPECT_NEAR(g.alpha.back(), 1e3, 1e-9);
  const SweepReport s = run_sweep(c, g);
  EXPECT_EQ(s.trials.size(), 17u);
  for (std::size_t i = 0; i < s.trials.size(); ++i) EXPECT_EQ(s.trials[i].id, static_cast<int>(i));
}

TEST(Sweep, Table2SearchSpace) {
  const SweepGrid g = SweepGrid::table2();
  EXPECT_EQ(g.rep_layer_count, (std::vector<Index>{1, 2, 3}));
  EXPECT_EQ(g.head_layer_count, (std::vector<Index>{1, 2, 3}));
  EXPECT_EQ(g.rep_dim, (std::vector<Index>{20, 50, 100, 200}));
  EXPECT_EQ(g.head_dim, (std::vector<Index>{20, 50, 100, 200}));
  EXPECT_EQ(g.batch_size, (std::vector<Index>{100, 200, 500, 700}));
  EXPECT_EQ(expand_grid(g, tiny()).size(), 17u * 3 * 3 * 4 * 4 * 4);
}

TEST(Sweep, RandomSubsetIsSeeded) {
  ExperimentConfig c = tiny();
  const SweepGrid g = SweepGrid::from_config(ConfigFile::parse("[sweep]\nalpha = table2\nn_trials = 5\n"));
  EXPECT_EQ(g.random_trials, 5);
  c.n_realizations = 1;
  c.train.max_epochs = 1;
  const SweepReport a = run_sweep(c, g);
  const SweepReport b = run_sweep(c, g);
  ASSERT_EQ(a.trials.size(), 5u);
  EXPECT_EQ(a.to_json(), b.to_json());
}

TEST(Sweep, SelectionIgnoresTestData) {
  ExperimentConfig c = tiny();
  SweepGrid g;
  g.alpha = {0.0, 0.1, 10.0};
  const SweepReport clean = run_sweep(c, g);
  RunHooks corrupt;
  corrupt.transform_test = [](ObservationalDataset& ds) {
    ds.outcome.array() += 100.0;
    if (ds.ground_truth) ds.ground_truth->mu1.array() += 50.0;
  };
  const SweepReport dirty = run_sweep(c, g, corrupt);
  EXPECT_EQ(clean.best_trial, dirty.best_trial);
  for (std::size_t i = 0; i < clean.trials.size(); ++i)
    EXPECT_EQ(clean.trials[i].selection_score, dirty.trials[i].selection_score);
  const auto a = clean.best().report.find(metrics::Setting::out_of_sample, "sqrt_pehe");
  const auto b = dirty.best().report.find(metrics::Setting::out_of_sample, "sqrt_pehe");
  EXPECT_NE(a->mean, b->mean);
  // Within-sample numbers never see the test split.
  EXPECT_EQ(clean.best().report.find(metrics::Setting::within_sample, "sqrt_pehe")->mean,
            dirty.best().report.find(metrics::Setting::within_sample, "sqrt_pehe")->mean);
}

TEST(Sweep, FailedTrialsAreRecorded) {
  ExperimentConfig c = tiny();
  c.n_realizations = 1;
  c.train.max_epochs = 1;
  SweepGrid g;
  g.alpha = {0.0};
  g.batch_size = {1, 16};  // batch size 1 is invalid
  const SweepReport s = run_sweep(c, g);
  ASSERT_EQ(s.trials.size(), 2u);
  EXPECT_TRUE(s.trials[0].failed);
  EXPECT_FALSE(s.trials[0].error.empty());
  EXPECT_EQ(s.best_trial, 1);

  g.batch_size = {1};
  EXPECT_THROW(run_sweep(c, g), Error);
}

TEST(Figure2, ShapeAndSelfReference) {
  ExperimentConfig c = tiny();
  c.data.imbalance_remove = 20;
  const Figure2Data f = emit_figure2_data(c, {0.0, 1.0}, {0.0, 1.0});
  ASSERT_EQ(f.rows.size(), 4u);
  for (const auto& r : f.rows)
    if (r.alpha == 0.0) EXPECT_EQ(r.relative_to_alpha0, 1.0);
  EXPECT_EQ(line_count(f.to_csv()), 5u);
  EXPECT_THROW(emit_figure2_data(c, {1.0}, {0.0}), ConfigError);
}

TEST(Config, FromFile) {
  const auto cfg = ConfigFile::parse(
      "[data]\nn_units = 150\n[model]\nrep_layers = 10, 10\nhead_layers = 5\nestimator = ols2\n"
      "[train]\nalpha = 0.3\n[ipm]\nkind = rbf_mmd\n[experiment]\nn_realizations = 4\n"
      "selection_criterion = policy_risk\n");
  const ExperimentConfig c = ExperimentConfig::from_config(cfg);
  EXPECT_EQ(c.data.synthetic_cfg.n_units, 150);
  EXPECT_EQ(c.model.rep_layers, (std::vector<Index>{10, 10}));
  EXPECT_EQ(c.estimator, Estimator::ols2);
  EXPECT_DOUBLE_EQ(c.train.alpha, 0.3);
  EXPECT_EQ(c.train.ipm.kind, ipm::IpmKind::rbf_mmd);
  EXPECT_EQ(c.n_realizations, 4);
  EXPECT_EQ(c.selection, SelectionCriterion::policy_risk);
  EXPECT_THROW(ExperimentConfig::from_config(ConfigFile::parse("[model]\nestimator = forest\n")), ConfigError);
}

TEST(ParallelFor, RethrowsFirstError) {
  std::vector<int> hit(10, 0);
  parallel_for(10, 3, [&](int i) { hit[static_cast<std::size_t>(i)] = 1; });
  EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 10);
  EXPECT_THROW(parallel_for(4, 2, [](int i) {
                 if (i == 2) throw TrainingError("boom");
               }),
               TrainingError);
}
