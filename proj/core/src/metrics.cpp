#include "cfr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <json.hpp>

#include "cfr/error.hpp"
#include "cfr/logistic.hpp"
#include "cfr/network.hpp"

namespace cfr::metrics {

ItePredictions::ItePredictions(Vector y0_hat, Vector y1_hat)
    : y0_(std::move(y0_hat)), y1_(std::move(y1_hat)) {
  if (y0_.size() != y1_.size()) throw ArgumentError("ItePredictions: y0/y1 length mismatch");
  tau_ = y1_ - y0_;
}

Vector ItePredictions::factual(const IntVector& t) const {
  if (t.size() != size()) throw ArgumentError("factual: length mismatch");
  Vector out(size());
  for (Index i = 0; i < size(); ++i) out(i) = t(i) == 1 ? y1_(i) : y0_(i);
  return out;
}

ItePredictions ItePredictions::rows(const std::vector<Index>& idx) const {
  Vector a(static_cast<Index>(idx.size()));
  Vector b(static_cast<Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    a(static_cast<Index>(r)) = y0_(idx[r]);
    b(static_cast<Index>(r)) = y1_(idx[r]);
  }
  return {std::move(a), std::move(b)};
}

namespace {

const GroundTruth& require_truth(const ObservationalDataset& ds) {
  if (!ds.ground_truth) throw ArgumentError("metric requires ground-truth potential outcomes");
  return *ds.ground_truth;
}

const IntVector& require_flags(const ObservationalDataset& ds) {
  if (!ds.randomized_flag) throw ArgumentError("metric requires the randomized-subset flag");
  return *ds.randomized_flag;
}

void check_length(const ItePredictions& preds, Index n) {
  if (preds.size() != n) throw ArgumentError("prediction length does not match the data");
  if (n == 0) throw ArgumentError("metric over an empty set");
}

}  // namespace

double pehe(const ItePredictions& preds, const GroundTruth& truth) {
  check_length(preds, truth.mu0.size());
  const Vector diff = preds.tau_hat() - truth.tau();
  return std::sqrt(diff.squaredNorm() / static_cast<double>(diff.size()));
}

double pehe(const ItePredictions& preds, const ObservationalDataset& ds) {
  return pehe(preds, require_truth(ds));
}

double ate_error(const ItePredictions& preds, const GroundTruth& truth) {
  check_length(preds, truth.mu0.size());
  return std::abs(preds.tau_hat().mean() - truth.tau().mean());
}

double ate_error(const ItePredictions& preds, const ObservationalDataset& ds) {
  return ate_error(preds, require_truth(ds));
}

double true_att(const ObservationalDataset& ds) {
  const IntVector& e = require_flags(ds);
  double treated_sum = 0.0;
  Index treated_n = 0;
  double control_sum = 0.0;
  Index control_n = 0;
  for (Index i = 0; i < ds.size(); ++i) {
    if (ds.treatment(i) == 1) {
      treated_sum += ds.outcome(i);
      ++treated_n;
    } else if (e(i) == 1) {
      control_sum += ds.outcome(i);
      ++control_n;
    }
  }
  if (treated_n == 0) throw ArgumentError("ATT: no treated units");
  if (control_n == 0) throw ArgumentError("ATT: no randomized control units");
  return treated_sum / static_cast<double>(treated_n) - control_sum / static_cast<double>(control_n);
}

double att_error(const ItePredictions& preds, const ObservationalDataset& ds) {
  check_length(preds, ds.size());
  const double att = true_att(ds);
  double sum = 0.0;
  Index n = 0;
  for (Index i = 0; i < ds.size(); ++i) {
    if (ds.treatment(i) == 1) {
      sum += preds.tau_hat()(i);
      ++n;
    }
  }
  return std::abs(att - sum / static_cast<double>(n));
}

PolicyRisk policy_risk(const ItePredictions& preds, const ObservationalDataset& ds,
                       double threshold) {
  check_length(preds, ds.size());
  const IntVector& e = require_flags(ds);
  Index n = 0;
  Index treat_n = 0;
  double treat_sum = 0.0;   // y over pi=1, t=1
  Index treat_cell = 0;
  double skip_sum = 0.0;    // y over pi=0, t=0
  Index skip_cell = 0;
  for (Index i = 0; i < ds.size(); ++i) {
    if (e(i) != 1) continue;
    ++n;
    const bool treat = preds.tau_hat()(i) > threshold;
    if (treat) ++treat_n;
    if (treat && ds.treatment(i) == 1) {
      treat_sum += ds.outcome(i);
      ++treat_cell;
    } else if (!treat && ds.treatment(i) == 0) {
      skip_sum += ds.outcome(i);
      ++skip_cell;
    }
  }
  if (n == 0) throw ArgumentError("policy risk: no randomized rows");
  PolicyRisk out;
  const double p_treat = static_cast<double>(treat_n) / static_cast<double>(n);
  const double treat_mean = treat_cell > 0 ? treat_sum / static_cast<double>(treat_cell) : 0.0;
  const double skip_mean = skip_cell > 0 ? skip_sum / static_cast<double>(skip_cell) : 0.0;
  out.empty_cell = (treat_n > 0 && treat_cell == 0) || (treat_n < n && skip_cell == 0);
  out.risk = 1.0 - (treat_mean * p_treat + skip_mean * (1.0 - p_treat));
  out.treated_fraction = p_treat;
  return out;
}

std::vector<PolicyRisk> policy_curve(const ItePredictions& preds, const ObservationalDataset& ds) {
  check_length(preds, ds.size());
  const IntVector& e = require_flags(ds);
  std::vector<double> thresholds{-std::numeric_limits<double>::infinity()};
  for (Index i = 0; i < ds.size(); ++i)
    if (e(i) == 1) thresholds.push_back(preds.tau_hat()(i));
  std::sort(thresholds.begin() + 1, thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::vector<PolicyRisk> out;
  out.reserve(thresholds.size());
  for (double th : thresholds) out.push_back(policy_risk(preds, ds, th));
  std::stable_sort(out.begin(), out.end(), [](const PolicyRisk& a, const PolicyRisk& b) {
    return a.treated_fraction < b.treated_fraction;
  });
  return out;
}

std::vector<Index> opposite_arm_neighbors(const ObservationalDataset& ds) {
  if (ds.treated_count() == 0 || ds.control_count() == 0)
    throw ArgumentError("nearest-neighbour matching needs both treatment arms");
  Vector mean;
  Vector scale;
  column_standardization(ds.covariates, mean, scale);
  const Matrix z =
      (ds.covariates.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  std::vector<Index> out(static_cast<std::size_t>(ds.size()));
  for (Index i = 0; i < ds.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    Index arg = -1;
    for (Index j = 0; j < ds.size(); ++j) {
      if (ds.treatment(j) == ds.treatment(i)) continue;
      const double d = (z.row(i) - z.row(j)).squaredNorm();
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    out[static_cast<std::size_t>(i)] = arg;
  }
  return out;
}

double pehe_nn(const ItePredictions& preds, const ObservationalDataset& ds) {
  check_length(preds, ds.size());
  const std::vector<Index> nn = opposite_arm_neighbors(ds);
  double sum = 0.0;
  for (Index i = 0; i < ds.size(); ++i) {
    const double sign = 1.0 - 2.0 * ds.treatment(i);
    const double surrogate = sign * (ds.outcome(nn[static_cast<std::size_t>(i)]) - ds.outcome(i));
    const double r = surrogate - preds.tau_hat()(i);
    sum += r * r;
  }
  return sum / static_cast<double>(ds.size());
}

FactualLosses factual_losses(const Vector& factual_pred, const ObservationalDataset& ds,
                             LossKind kind) {
  if (factual_pred.size() != ds.size()) throw ArgumentError("factual_losses: length mismatch");
  if (ds.size() == 0) throw ArgumentError("factual_losses: empty dataset");
  double sum[2] = {0.0, 0.0};
  Index count[2] = {0, 0};
  for (Index i = 0; i < ds.size(); ++i) {
    const int t = ds.treatment(i);
    sum[t] += nn::sample_loss(factual_pred(i), ds.outcome(i), kind);
    ++count[t];
  }
  FactualLosses out;
  out.overall = (sum[0] + sum[1]) / static_cast<double>(ds.size());
  if (count[1] > 0) out.treated = sum[1] / static_cast<double>(count[1]);
  if (count[0] > 0) out.control = sum[0] / static_cast<double>(count[0]);
  return out;
}

std::string to_string(Setting s) {
  return s == Setting::within_sample ? "within_sample" : "out_of_sample";
}

EvaluationReport evaluate(const ItePredictions& preds, const ObservationalDataset& ds,
                          Setting setting) {
  EvaluationReport r;
  r.setting = setting;
  if (ds.ground_truth) {
    r.sqrt_pehe = Metric::of(pehe(preds, ds));
    r.ate_error = Metric::of(ate_error(preds, ds));
  } else {
    r.sqrt_pehe = Metric::missing("no ground truth");
    r.ate_error = Metric::missing("no ground truth");
  }
  if (ds.randomized_flag) {
    try {
      r.att_error = Metric::of(att_error(preds, ds));
    } catch (const ArgumentError& e) {
      r.att_error = Metric::missing(e.what());
    }
    try {
      r.policy_risk_at_zero = Metric::of(policy_risk(preds, ds, 0.0).risk);
      r.policy_curve = policy_curve(preds, ds);
    } catch (const ArgumentError& e) {
      r.policy_risk_at_zero = Metric::missing(e.what());
    }
  } else {
    r.att_error = Metric::missing("no randomized-subset flag");
    r.policy_risk_at_zero = Metric::missing("no randomized-subset flag");
  }
  if (ds.treated_count() > 0 && ds.control_count() > 0) {
    r.pehe_nn = Metric::of(pehe_nn(preds, ds));
  } else {
    r.pehe_nn = Metric::missing("single treatment arm");
  }
  return r;
}

namespace {

nlohmann::ordered_json metric_json(const Metric& m) {
  if (m.value) return *m.value;
  return nullptr;
}

std::string csv_cell(const Metric& m) {
  if (!m.value) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", *m.value);
  return buf;
}

}  // namespace

std::string EvaluationReport::to_json() const {
  nlohmann::ordered_json j;
  j["setting"] = to_string(setting);
  j["sqrt_pehe"] = metric_json(sqrt_pehe);
  j["ate_error"] = metric_json(ate_error);
  j["att_error"] = metric_json(att_error);
  j["policy_risk"] = metric_json(policy_risk_at_zero);
  j["pehe_nn"] = metric_json(pehe_nn);
  nlohmann::ordered_json missing = nlohmann::ordered_json::object();
  const std::pair<const char*, const Metric*> all[] = {{"sqrt_pehe", &sqrt_pehe},
                                                       {"ate_error", &ate_error},
                                                       {"att_error", &att_error},
                                                       {"policy_risk", &policy_risk_at_zero},
                                                       {"pehe_nn", &pehe_nn}};
  for (const auto& [name, m] : all)
    if (!m->value) missing[name] = m->missing_reason;
  j["missing"] = missing;
  nlohmann::ordered_json curve = nlohmann::ordered_json::array();
  for (const auto& p : policy_curve)
    curve.push_back({{"treated_fraction", p.treated_fraction}, {"risk", p.risk},
                     {"empty_cell", p.empty_cell}});
  j["policy_curve"] = curve;
  return j.dump(2);
}

std::string EvaluationReport::csv_header() {
  return "setting,sqrt_pehe,ate_error,policy_risk,att_error,pehe_nn";
}

std::string EvaluationReport::csv_row() const {
  return to_string(setting) + "," + csv_cell(sqrt_pehe) + "," + csv_cell(ate_error) + "," +
         csv_cell(policy_risk_at_zero) + "," + csv_cell(att_error) + "," + csv_cell(pehe_nn);
}

}  // namespace cfr::metrics
