#include "cfr/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cfr/baselines.hpp"
#include "cfr/config_file.hpp"
#include "cfr/error.hpp"

namespace cfr::experiment {
namespace {

using nlohmann::ordered_json;

const std::vector<std::string> kMetricNames{"sqrt_pehe", "ate_error", "policy_risk", "att_error",
                                            "pehe_nn"};

const metrics::Metric& metric_of(const metrics::EvaluationReport& r, const std::string& name) {
  if (name == "sqrt_pehe") return r.sqrt_pehe;
  if (name == "ate_error") return r.ate_error;
  if (name == "policy_risk") return r.policy_risk_at_zero;
  if (name == "att_error") return r.att_error;
  return r.pehe_nn;
}

std::vector<Index> to_index(const std::vector<long>& v, const std::string& what) {
  std::vector<Index> out;
  for (long x : v) {
    if (x <= 0) throw ConfigError(what + ": values must be positive");
    out.push_back(static_cast<Index>(x));
  }
  return out;
}

LossKind loss_from_string(const std::string& s) {
  if (s == "squared") return LossKind::squared;
  if (s == "log" || s == "log_loss") return LossKind::log_loss;
  throw ConfigError("unknown loss '" + s + "' (expected squared|log)");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

double weighted_factual_loss(const metrics::ItePredictions& preds, const ObservationalDataset& ds,
                             LossKind kind) {
  const Vector f = preds.factual(ds.treatment);
  const train::GroupWeights gw = train::group_weights(ds.treatment);
  double s = 0.0;
  for (Index i = 0; i < ds.size(); ++i) {
    double l = 0.0;
    if (kind == LossKind::squared) {
      l = (f(i) - ds.outcome(i)) * (f(i) - ds.outcome(i));
    } else {
      const double p = std::clamp(f(i), 1e-12, 1.0 - 1e-12);
      l = -(ds.outcome(i) * std::log(p) + (1.0 - ds.outcome(i)) * std::log(1.0 - p));
    }
    s += gw.weights(i) * l;
  }
  return s / static_cast<double>(ds.size());
}

ordered_json point_json(const TrialPoint& p) {
  ordered_json j;
  j["alpha"] = p.alpha;
  j["rep_layers"] = p.rep_layer_count;
  j["head_layers"] = p.head_layer_count;
  j["rep_dim"] = p.rep_dim;
  j["head_dim"] = p.head_dim;
  j["batch_size"] = p.batch_size;
  return j;
}

ordered_json aggregates_json(const std::vector<Aggregate>& aggs) {
  ordered_json out = ordered_json::array();
  for (const Aggregate& a : aggs) {
    ordered_json j;
    j["setting"] = metrics::to_string(a.setting);
    j["metric"] = a.metric;
    j["mean"] = a.mean;
    j["std_error"] = a.std_error;
    j["count"] = a.count;
    out.push_back(j);
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::cfr: return "cfr";
    case Estimator::ols1: return "ols1";
    case Estimator::ols2: return "ols2";
    case Estimator::knn: return "knn";
  }
  return "?";
}

std::string to_string(SelectionCriterion c) {
  switch (c) {
    case SelectionCriterion::pehe_nn: return "pehe_nn";
    case SelectionCriterion::policy_risk: return "policy_risk";
    case SelectionCriterion::validation_objective: return "validation_objective";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  if (data.synthetic) {
    data.synthetic_cfg.validate();
  } else if (data.csv_path.empty()) {
    throw ConfigError("data.path is required when data.source = csv");
  }
  if (data.imbalance_remove < 0) throw ConfigError("data.imbalance_remove must be >= 0");
  if (data.imbalance_q < 0.0 || data.imbalance_q > 1.0)
    throw ConfigError("data.imbalance_q must lie in [0, 1]");
  try {
    splits.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (knn_k < 1) throw ConfigError("model.knn_k must be >= 1");
  if (n_realizations < 1) throw ConfigError("experiment.n_realizations must be >= 1");
  if (threads < 0) throw ConfigError("experiment.threads must be >= 0");
  if (estimator == Estimator::cfr) {
    try {
      train.validate();
      nn::NetworkArchitecture arch = model;
      if (arch.input_dim == 0) arch.input_dim = 1;
      arch.validate();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
}

ExperimentConfig ExperimentConfig::from_config(const ConfigFile& cfg) {
  ExperimentConfig out;

  const std::string source = cfg.get_string("data", "source", "synthetic");
  if (source == "synthetic") {
    out.data.synthetic = true;
    out.data.synthetic_cfg = SyntheticConfig::from_config(cfg, "data");
  } else if (source == "csv") {
    out.data.synthetic = false;
    out.data.csv_path = cfg.get_string("data", "path", "");
  } else {
    throw ConfigError("data.source must be synthetic or csv, got '" + source + "'");
  }
  const std::string outcome = cfg.get_string("data", "outcome_kind", "continuous");
  if (outcome == "continuous") {
    out.data.schema.outcome_kind = OutcomeKind::continuous;
  } else if (outcome == "binary") {
    out.data.schema.outcome_kind = OutcomeKind::binary;
  } else {
    throw ConfigError("data.outcome_kind must be continuous or binary");
  }
  out.data.imbalance_remove = cfg.get_int("data", "imbalance_remove", 0);
  out.data.imbalance_q = cfg.get_double("data", "imbalance_q", 0.0);

  out.splits.train = cfg.get_double("splits", "train", out.splits.train);
  out.splits.valid = cfg.get_double("splits", "valid", out.splits.valid);
  out.splits.test = cfg.get_double("splits", "test", out.splits.test);

  std::vector<long> rep_default(out.model.rep_layers.begin(), out.model.rep_layers.end());
  std::vector<long> head_default(out.model.head_layers.begin(), out.model.head_layers.end());
  out.model.rep_layers = to_index(cfg.get_ints("model", "rep_layers", rep_default), "model.rep_layers");
  out.model.head_layers = to_index(cfg.get_ints("model", "head_layers", head_default), "model.head_layers");
  try {
    out.model.rep_normalization =
        nn::rep_normalization_from_string(cfg.get_string("model", "normalization", "unit_l2_projection"));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  out.model.outcome_kind = out.data.schema.outcome_kind;
  const std::string est = cfg.get_string("model", "estimator", "cfr");
  if (est == "cfr") {
    out.estimator = Estimator::cfr;
  } else if (est == "ols1") {
    out.estimator = Estimator::ols1;
  } else if (est == "ols2") {
    out.estimator = Estimator::ols2;
  } else if (est == "knn") {
    out.estimator = Estimator::knn;
  } else {
    throw ConfigError("model.estimator must be cfr|ols1|ols2|knn, got '" + est + "'");
  }
  out.knn_k = cfg.get_int("model", "knn_k", 1);

  train::TrainConfig& t = out.train;
  t.alpha = cfg.get_double("train", "alpha", t.alpha);
  t.weight_decay_lambda = cfg.get_double("train", "weight_decay", t.weight_decay_lambda);
  t.batch_size = cfg.get_int("train", "batch_size", t.batch_size);
  t.max_epochs = static_cast<int>(cfg.get_int("train", "max_epochs", t.max_epochs));
  t.early_stop_patience = static_cast<int>(cfg.get_int("train", "patience", t.early_stop_patience));
  t.loss_kind = loss_from_string(cfg.get_string(
      "train", "loss", out.data.schema.outcome_kind == OutcomeKind::binary ? "log" : "squared"));
  t.square_linear_mmd = cfg.get_bool("train", "square_linear_mmd", t.square_linear_mmd);
  t.adam.step_size = cfg.get_double("train", "learning_rate", t.adam.step_size);
  t.adam.beta1 = cfg.get_double("train", "adam_beta1", t.adam.beta1);
  t.adam.beta2 = cfg.get_double("train", "adam_beta2", t.adam.beta2);
  t.adam.epsilon = cfg.get_double("train", "adam_epsilon", t.adam.epsilon);

  try {
    t.ipm.kind = ipm::ipm_kind_from_string(cfg.get_string("ipm", "kind", ipm::to_string(t.ipm.kind)));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  t.ipm.sinkhorn_lambda = cfg.get_double("ipm", "sinkhorn_lambda", t.ipm.sinkhorn_lambda);
  t.ipm.sinkhorn_iterations =
      static_cast<int>(cfg.get_int("ipm", "sinkhorn_iterations", t.ipm.sinkhorn_iterations));
  t.ipm.sinkhorn_tolerance = cfg.get_double("ipm", "sinkhorn_tolerance", t.ipm.sinkhorn_tolerance);
  t.ipm.log_domain_fallback = cfg.get_bool("ipm", "log_domain_fallback", t.ipm.log_domain_fallback);
  if (cfg.has("ipm", "rbf_bandwidth")) t.ipm.rbf_bandwidth = cfg.get_double("ipm", "rbf_bandwidth", 1.0);

  const std::string sel = cfg.get_string("experiment", "selection_criterion", "pehe_nn");
  if (sel == "pehe_nn") {
    out.selection = SelectionCriterion::pehe_nn;
  } else if (sel == "policy_risk") {
    out.selection = SelectionCriterion::policy_risk;
  } else if (sel == "validation_objective") {
    out.selection = SelectionCriterion::validation_objective;
  } else {
    throw ConfigError("experiment.selection_criterion must be pehe_nn|policy_risk|validation_objective");
  }
  const std::string setting = cfg.get_string("experiment", "metrics_setting", "both");
  if (setting == "within_sample") {
    out.metrics_setting = MetricsSetting::within_sample;
  } else if (setting == "out_of_sample") {
    out.metrics_setting = MetricsSetting::out_of_sample;
  } else if (setting == "both") {
    out.metrics_setting = MetricsSetting::both;
  } else {
    throw ConfigError("experiment.metrics_setting must be within_sample|out_of_sample|both");
  }
  out.n_realizations = static_cast<int>(cfg.get_int("experiment", "n_realizations", out.n_realizations));
  const long seed = cfg.get_int("experiment", "base_seed", static_cast<long>(out.base_seed));
  if (seed < 0) throw ConfigError("experiment.base_seed must be >= 0");
  out.base_seed = static_cast<std::uint64_t>(seed);
  out.threads = static_cast<int>(cfg.get_int("experiment", "threads", 0));
  out.train.seed = out.base_seed;
  return out;
}

RealizationSeeds realization_seeds(std::uint64_t base_seed, int realization) {
  const auto r = static_cast<std::uint64_t>(realization);
  return {mix_seed(base_seed, 4 * r), mix_seed(base_seed, 4 * r + 1), mix_seed(base_seed, 4 * r + 2),
          mix_seed(base_seed, 4 * r + 3)};
}

ObservationalDataset realization_data(const ExperimentConfig& cfg, int realization) {
  const RealizationSeeds seeds = realization_seeds(cfg.base_seed, realization);
  ObservationalDataset ds = cfg.data.synthetic ? generate_synthetic(cfg.data.synthetic_cfg, seeds.data)
                                               : load_csv(cfg.data.csv_path, cfg.data.schema);
  if (cfg.data.imbalance_remove > 0)
    ds = induce_imbalance(ds, cfg.data.imbalance_q, cfg.data.imbalance_remove, seeds.imbalance);
  return ds;
}

DatasetSplit realization_split(const ExperimentConfig& cfg, int realization) {
  return split(realization_data(cfg, realization), cfg.splits,
               realization_seeds(cfg.base_seed, realization).split);
}

train::TrainResult train_cfr(const ExperimentConfig& cfg, const DatasetSplit& s, int realization) {
  nn::NetworkArchitecture arch = cfg.model;
  arch.input_dim = s.train.dim();
  arch.outcome_kind = s.train.outcome_kind;
  const std::uint64_t model_seed = realization_seeds(cfg.base_seed, realization).model;
  train::TrainConfig tc = cfg.train;
  tc.seed = mix_seed(model_seed, 1);
  return train::train(nn::Network::init(arch, model_seed), s.train, s.valid, tc);
}

FittedModel fit_model(const ExperimentConfig& cfg, const DatasetSplit& s, int realization) {
  FittedModel fm;
  switch (cfg.estimator) {
    case Estimator::cfr: {
      train::TrainResult tr = train_cfr(cfg, s, realization);
      fm.network = tr.network;
      fm.trace = tr.trace;
      fm.validation_objective = tr.trace.best_valid_objective;
      const nn::Network net = std::move(tr.network);
      fm.predict = [net](const Matrix& x) {
        nn::PotentialOutcomes po = nn::predict_potential_outcomes(net, x);
        return metrics::ItePredictions(std::move(po.y0), std::move(po.y1));
      };
      return fm;
    }
    case Estimator::ols1: {
      const baselines::LinearModel m = baselines::fit_variant1(s.train);
      fm.predict = [m](const Matrix& x) { return baselines::predict_variant1(m, x); };
      break;
    }
    case Estimator::ols2: {
      const baselines::Variant2 m = baselines::fit_variant2(s.train);
      fm.predict = [m](const Matrix& x) { return baselines::predict_variant2(m, x); };
      break;
    }
    case Estimator::knn: {
      const ObservationalDataset ref = s.train;
      const Index k = cfg.knn_k;
      fm.predict = [ref, k](const Matrix& x) { return baselines::knn_predict(ref, k, x); };
      break;
    }
  }
  fm.validation_objective = weighted_factual_loss(fm.predict(s.valid.covariates), s.valid,
                                                  s.valid.outcome_kind == OutcomeKind::binary
                                                      ? LossKind::log_loss
                                                      : LossKind::squared);
  return fm;
}

double selection_score(const ExperimentConfig& cfg, const FittedModel& model,
                       const ObservationalDataset& valid) {
  switch (cfg.selection) {
    case SelectionCriterion::validation_objective:
      return model.validation_objective;
    case SelectionCriterion::pehe_nn:
      return metrics::pehe_nn(model.predict(valid.covariates), valid);
    case SelectionCriterion::policy_risk: {
      if (!valid.randomized_flag)
        throw ConfigError("selection by policy_risk needs a randomized-subset column");
      return metrics::policy_risk(model.predict(valid.covariates), valid, 0.0).risk;
    }
  }
  return 0.0;
}

std::pair<double, double> mean_and_std_error(const std::vector<double>& values) {
  if (values.empty()) return {std::nan(""), std::nan("")};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

std::optional<Aggregate> ExperimentReport::find(metrics::Setting setting,
                                                const std::string& metric) const {
  for (const Aggregate& a : aggregates)
    if (a.setting == setting && a.metric == metric) return a;
  return std::nullopt;
}

std::string ExperimentReport::to_json() const {
  ordered_json j;
  j["mean_selection_score"] = mean_selection_score;
  j["aggregates"] = aggregates_json(aggregates);
  ordered_json reals = ordered_json::array();
  for (const RealizationResult& r : realizations) {
    ordered_json rj;
    rj["realization"] = r.realization;
    rj["selection_score"] = r.selection_score;
    ordered_json reps = ordered_json::array();
    for (const auto& rep : r.reports) reps.push_back(ordered_json::parse(rep.to_json()));
    rj["reports"] = reps;
    reals.push_back(rj);
  }
  j["realizations"] = reals;
  return j.dump(2);
}

std::string ExperimentReport::csv_header() {
  return "realization," + metrics::EvaluationReport::csv_header() + ",selection_score";
}

std::string ExperimentReport::to_csv() const {
  std::string out = csv_header() + "\n";
  for (const RealizationResult& r : realizations)
    for (const auto& rep : r.reports)
      out += std::to_string(r.realization) + "," + rep.csv_row() + "," + fmt(r.selection_score) + "\n";
  return out;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunHooks& hooks) {
  cfg.validate();
  ExperimentReport report;
  report.realizations.resize(static_cast<std::size_t>(cfg.n_realizations));

  parallel_for(cfg.n_realizations, cfg.threads, [&](int r) {
    DatasetSplit s = realization_split(cfg, r);
    const FittedModel model = fit_model(cfg, s, r);
    RealizationResult& out = report.realizations[static_cast<std::size_t>(r)];
    out.realization = r;
    out.selection_score = selection_score(cfg, model, s.valid);
    if (cfg.metrics_setting != MetricsSetting::out_of_sample) {
      const ObservationalDataset within = concat(s.train, s.valid);
      out.reports.push_back(
          metrics::evaluate(model.predict(within.covariates), within, metrics::Setting::within_sample));
    }
    if (cfg.metrics_setting != MetricsSetting::within_sample) {
      if (hooks.transform_test) hooks.transform_test(s.test);
      out.reports.push_back(
          metrics::evaluate(model.predict(s.test.covariates), s.test, metrics::Setting::out_of_sample));
    }
  });

  std::vector<double> scores;
  for (const auto& r : report.realizations) scores.push_back(r.selection_score);
  report.mean_selection_score = mean_and_std_error(scores).first;

  for (metrics::Setting setting : {metrics::Setting::within_sample, metrics::Setting::out_of_sample}) {
    for (const std::string& name : kMetricNames) {
      std::vector<double> vals;
      bool present = false;
      for (const auto& r : report.realizations) {
        for (const auto& rep : r.reports) {
          if (rep.setting != setting) continue;
          present = true;
          if (const auto& m = metric_of(rep, name); m.value) vals.push_back(*m.value);
        }
      }
      if (!present || vals.empty()) continue;
      const auto [mean, se] = mean_and_std_error(vals);
      report.aggregates.push_back({setting, name, mean, se, static_cast<int>(vals.size())});
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

std::vector<double> table2_alpha_grid() {
  std::vector<double> out;
  for (int k = -10; k <= 6; ++k) out.push_back(std::pow(10.0, k / 2.0));
  return out;
}

SweepGrid SweepGrid::table2() {
  SweepGrid g;
  g.alpha = table2_alpha_grid();
  g.rep_layer_count = {1, 2, 3};
  g.head_layer_count = {1, 2, 3};
  g.rep_dim = {20, 50, 100, 200};
  g.head_dim = {20, 50, 100, 200};
  g.batch_size = {100, 200, 500, 700};
  return g;
}

SweepGrid SweepGrid::from_config(const ConfigFile& cfg) {
  SweepGrid g;
  if (cfg.get_string("sweep", "alpha", "") == "table2") {
    g.alpha = table2_alpha_grid();
  } else {
    g.alpha = cfg.get_doubles("sweep", "alpha", {});
  }
  g.rep_layer_count = to_index(cfg.get_ints("sweep", "rep_layers", {}), "sweep.rep_layers");
  g.head_layer_count = to_index(cfg.get_ints("sweep", "head_layers", {}), "sweep.head_layers");
  g.rep_dim = to_index(cfg.get_ints("sweep", "rep_dim", {}), "sweep.rep_dim");
  g.head_dim = to_index(cfg.get_ints("sweep", "head_dim", {}), "sweep.head_dim");
  g.batch_size = to_index(cfg.get_ints("sweep", "batch_size", {}), "sweep.batch_size");
  const std::string strategy = cfg.get_string("sweep", "strategy", "random");
  if (strategy == "random") {
    g.random_trials = static_cast<int>(cfg.get_int("sweep", "n_trials", 20));
    if (g.random_trials < 1) throw ConfigError("sweep.n_trials must be >= 1");
  } else if (strategy != "grid") {
    throw ConfigError("sweep.strategy must be random or grid, got '" + strategy + "'");
  }
  for (double a : g.alpha)
    if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("sweep.alpha values must be finite and >= 0");
  return g;
}

std::vector<TrialPoint> expand_grid(const SweepGrid& grid, const ExperimentConfig& base) {
  auto or_base = [](const auto& v, auto b) {
    using T = decltype(b);
    return v.empty() ? std::vector<T>{b} : std::vector<T>(v.begin(), v.end());
  };
  const auto alphas = or_base(grid.alpha, base.train.alpha);
  const auto reps = or_base(grid.rep_layer_count, static_cast<Index>(base.model.rep_layers.size()));
  const auto heads = or_base(grid.head_layer_count, static_cast<Index>(base.model.head_layers.size()));
  const auto rdims = or_base(grid.rep_dim, base.model.rep_layers.back());
  const auto hdims = or_base(grid.head_dim, base.model.head_layers.back());
  const auto batches = or_base(grid.batch_size, base.train.batch_size);

  std::vector<TrialPoint> out;
  for (double a : alphas)
    for (Index r : reps)
      for (Index h : heads)
        for (Index rd : rdims)
          for (Index hd : hdims)
            for (Index b : batches) out.push_back({a, r, h, rd, hd, b});
  return out;
}

ExperimentConfig apply_point(const ExperimentConfig& base, const TrialPoint& p) {
  ExperimentConfig c = base;
  c.train.alpha = p.alpha;
  c.model.rep_layers.assign(static_cast<std::size_t>(p.rep_layer_count), p.rep_dim);
  c.model.head_layers.assign(static_cast<std::size_t>(p.head_layer_count), p.head_dim);
  c.train.batch_size = p.batch_size;
  return c;
}

const TrialRecord& SweepReport::best() const {
  for (const TrialRecord& t : trials)
    if (t.id == best_trial) return t;
  throw Error("sweep report has no best trial");
}

std::string SweepReport::to_json() const {
  ordered_json j;
  j["best_trial"] = best_trial;
  ordered_json arr = ordered_json::array();
  for (const TrialRecord& t : trials) {
    ordered_json tj;
    tj["id"] = t.id;
    tj["hyperparameters"] = point_json(t.point);
    tj["failed"] = t.failed;
    if (t.failed) {
      tj["error"] = t.error;
    } else {
      tj["selection_score"] = t.selection_score;
      tj["metrics"] = aggregates_json(t.report.aggregates);
    }
    arr.push_back(tj);
  }
  j["trials"] = arr;
  if (best_trial >= 0) j["best_metrics"] = aggregates_json(best().report.aggregates);
  return j.dump(2);
}

std::string SweepReport::to_csv() const {
  std::string out = "trial,alpha,rep_layers,head_layers,rep_dim,head_dim,batch_size,status,selection_score";
  for (const std::string& m : kMetricNames) out += "," + m + "_mean," + m + "_se";
  out += "\n";
  for (const TrialRecord& t : trials) {
    const TrialPoint& p = t.point;
    out += std::to_string(t.id) + "," + fmt(p.alpha) + "," + std::to_string(p.rep_layer_count) + "," +
           std::to_string(p.head_layer_count) + "," + std::to_string(p.rep_dim) + "," +
           std::to_string(p.head_dim) + "," + std::to_string(p.batch_size) + "," +
           (t.failed ? "failed," : "ok," + fmt(t.selection_score));
    for (const std::string& m : kMetricNames) {
      const auto a = t.failed ? std::nullopt : t.report.find(metrics::Setting::out_of_sample, m);
      out += a ? "," + fmt(a->mean) + "," + fmt(a->std_error) : ",,";
    }
    out += "\n";
  }
  return out;
}

SweepReport run_sweep(const ExperimentConfig& cfg, const SweepGrid& grid, const RunHooks& hooks) {
  const std::vector<TrialPoint> all = expand_grid(grid, cfg);
  std::vector<int> ids(all.size());
  std::iota(ids.begin(), ids.end(), 0);
  if (grid.random_trials > 0 && static_cast<std::size_t>(grid.random_trials) < all.size()) {
    Rng rng(mix_seed(cfg.base_seed, 0x5eedULL));
    std::vector<int> chosen;
    std::sample(ids.begin(), ids.end(), std::back_inserter(chosen), grid.random_trials, rng);
    ids = std::move(chosen);  // std::sample keeps relative order
  }

  SweepReport report;
  report.trials.resize(ids.size());
  ExperimentConfig inner = cfg;
  inner.threads = 1;
  parallel_for(static_cast<int>(ids.size()), cfg.threads, [&](int k) {
    TrialRecord& rec = report.trials[static_cast<std::size_t>(k)];
    rec.id = ids[static_cast<std::size_t>(k)];
    rec.point = all[static_cast<std::size_t>(rec.id)];
    try {
      rec.report = run_experiment(apply_point(inner, rec.point), hooks);
      rec.selection_score = rec.report.mean_selection_score;
      if (!std::isfinite(rec.selection_score)) throw NumericError("non-finite selection score");
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
    }
  });

  for (const TrialRecord& t : report.trials) {
    if (t.failed) continue;
    if (report.best_trial < 0 || t.selection_score < report.best().selection_score)
      report.best_trial = t.id;
  }
  if (report.best_trial < 0) {
    std::string why = report.trials.empty() ? "empty grid" : report.trials.front().error;
    throw TrainingError("every sweep trial failed (first error: " + why + ")");
  }
  return report;
}

// ---------------------------------------------------------------------------

std::string Figure2Data::to_csv() const {
  std::string out = "q,alpha,median_sqrt_pehe,relative_to_alpha0\n";
  for (const Figure2Row& r : rows)
    out += fmt(r.q) + "," + fmt(r.alpha) + "," + fmt(r.median_sqrt_pehe) + "," + fmt(r.relative_to_alpha0) + "\n";
  return out;
}

Figure2Data emit_figure2_data(const ExperimentConfig& cfg, const std::vector<double>& alpha_grid,
                              const std::vector<double>& q_values) {
  cfg.validate();
  if (cfg.estimator != Estimator::cfr) throw ConfigError("figure2 requires the cfr estimator");
  if (q_values.empty()) throw ConfigError("figure2: no q values");
  const auto zero = std::find(alpha_grid.begin(), alpha_grid.end(), 0.0);
  if (zero == alpha_grid.end()) throw ConfigError("figure2: the alpha grid must contain 0");
  for (double q : q_values)
    if (q < 0.0 || q > 1.0) throw ConfigError("figure2: q must lie in [0, 1]");
  if (cfg.data.imbalance_remove <= 0) throw ConfigError("figure2: data.imbalance_remove must be > 0");

  Figure2Data out;
  out.q_values = q_values;
  out.alpha_grid = alpha_grid;
  const std::size_t nq = q_values.size();
  const std::size_t na = alpha_grid.size();
  const auto nr = static_cast<std::size_t>(cfg.n_realizations);
  out.sqrt_pehe.assign(nq, std::vector<std::vector<double>>(na, std::vector<double>(nr, 0.0)));

  const int jobs = static_cast<int>(nq * nr * na);
  parallel_for(jobs, cfg.threads, [&](int job) {
    const auto j = static_cast<std::size_t>(job);
    const std::size_t qi = j / (nr * na);
    const std::size_t r = (j / na) % nr;
    const std::size_t ai = j % na;
    ExperimentConfig c = cfg;
    c.data.imbalance_q = q_values[qi];
    c.train.alpha = alpha_grid[ai];
    const int real = static_cast<int>(r);
    const DatasetSplit s = realization_split(c, real);
    const train::TrainResult tr = train_cfr(c, s, real);
    nn::PotentialOutcomes po = nn::predict_potential_outcomes(tr.network, s.test.covariates);
    out.sqrt_pehe[qi][ai][r] =
        metrics::pehe(metrics::ItePredictions(std::move(po.y0), std::move(po.y1)), s.test);
  });

  const auto a0 = static_cast<std::size_t>(zero - alpha_grid.begin());
  for (std::size_t qi = 0; qi < nq; ++qi) {
    const double base = median(out.sqrt_pehe[qi][a0]);
    for (std::size_t ai = 0; ai < na; ++ai) {
      const double med = median(out.sqrt_pehe[qi][ai]);
      out.rows.push_back({q_values[qi], alpha_grid[ai], med, med / base});
    }
  }
  return out;
}

void parallel_for(int n, int threads, const std::function<void(int)>& job) {
  if (n <= 0) return;
  int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, n);
  std::atomic<int> next{0};
  std::exception_ptr first;
  std::mutex mu;
  auto run = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first) first = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  if (first) std::rethrow_exception(first);
}

}  // namespace cfr::experiment
