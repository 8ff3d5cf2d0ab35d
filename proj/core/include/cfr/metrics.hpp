#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cfr/data.hpp"

namespace cfr::metrics {

/// Potential-outcome predictions f(x, 0), f(x, 1) and the implied effect.
class ItePredictions {
 public:
  ItePredictions() = default;
  ItePredictions(Vector y0_hat, Vector y1_hat);

  const Vector& y0_hat() const { return y0_; }
  const Vector& y1_hat() const { return y1_; }
  const Vector& tau_hat() const { return tau_; }
  Index size() const { return tau_.size(); }

  /// f(x_i, t_i) for each row.
  Vector factual(const IntVector& t) const;
  ItePredictions rows(const std::vector<Index>& idx) const;

 private:
  Vector y0_;
  Vector y1_;
  Vector tau_;
};

/// sqrt((1/n) sum (tau_hat - tau)^2).
double pehe(const ItePredictions& preds, const GroundTruth& truth);
double pehe(const ItePredictions& preds, const ObservationalDataset& ds);

/// |mean(tau_hat) - mean(tau)|.
double ate_error(const ItePredictions& preds, const GroundTruth& truth);
double ate_error(const ItePredictions& preds, const ObservationalDataset& ds);

/// ATT from observed outcomes: mean y over treated minus mean y over
/// randomized controls; error against the model's mean effect on the treated.
double true_att(const ObservationalDataset& ds);
double att_error(const ItePredictions& preds, const ObservationalDataset& ds);

struct PolicyRisk {
  double risk = 0.0;
  double treated_fraction = 0.0;
  // A conditioning cell (policy treats & treated, or policy skips & control)
  // was empty; its conditional mean was taken as 0.
  bool empty_cell = false;
};

/// Policy pi(x) = 1 iff tau_hat > threshold, evaluated on randomized rows:
/// 1 - (E[y | pi=1, t=1] p(pi=1) + E[y | pi=0, t=0] p(pi=0)).
PolicyRisk policy_risk(const ItePredictions& preds, const ObservationalDataset& ds,
                       double threshold);

/// Risk at every distinct inclusion level: thresholds -inf and each unique
/// tau_hat among randomized rows, sorted by treated fraction.
std::vector<PolicyRisk> policy_curve(const ItePredictions& preds, const ObservationalDataset& ds);

/// Nearest-neighbour surrogate for PEHE: the counterfactual of unit i is the
/// observed outcome of its nearest opposite-arm unit in standardized
/// covariate space (ties to the lowest index).
double pehe_nn(const ItePredictions& preds, const ObservationalDataset& ds);

/// Index of the nearest opposite-arm unit for every row.
std::vector<Index> opposite_arm_neighbors(const ObservationalDataset& ds);

struct FactualLosses {
  double overall = 0.0;
  std::optional<double> treated;
  std::optional<double> control;
};

/// Unweighted per-arm and overall means of L(f(x_i, t_i), y_i).
FactualLosses factual_losses(const Vector& factual_pred, const ObservationalDataset& ds,
                             LossKind kind);

enum class Setting { within_sample, out_of_sample };
std::string to_string(Setting s);

/// A metric value or the reason it is unavailable.
struct Metric {
  std::optional<double> value;
  std::string missing_reason;

  static Metric of(double v) { return {v, {}}; }
  static Metric missing(std::string why) { return {std::nullopt, std::move(why)}; }
};

struct EvaluationReport {
  Setting setting = Setting::out_of_sample;
  Metric sqrt_pehe;
  Metric ate_error;
  Metric att_error;
  Metric policy_risk_at_zero;
  Metric pehe_nn;
  std::vector<PolicyRisk> policy_curve;

  std::string to_json() const;
  static std::string csv_header();
  /// One CSV row: setting,sqrt_pehe,ate_error,policy_risk,att_error,pehe_nn
  /// with empty cells for missing metrics.
  std::string csv_row() const;
};

/// Every metric the dataset supports.
EvaluationReport evaluate(const ItePredictions& preds, const ObservationalDataset& ds,
                          Setting setting);

}  // namespace cfr::metrics
