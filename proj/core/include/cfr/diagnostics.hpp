#pragma once

#include <optional>
#include <string>

#include "cfr/data.hpp"
#include "cfr/ipm.hpp"
#include "cfr/network.hpp"

namespace cfr::diagnostics {

/// Empirical plug-in of the PEHE upper bound for squared loss:
/// 2 (control loss + treated loss + b_phi * IPM - 2 sigma_y^2).
struct BoundReport {
  double factual_control_loss = 0.0;
  double factual_treated_loss = 0.0;
  double ipm_value = 0.0;
  double b_phi = 1.0;
  double sigma_y_squared = 0.0;
  // sigma_y^2 unknown and taken as 0, which loosens the bound.
  bool sigma_y_assumed_zero = false;
  double bound_value = 0.0;
  // Finite-sample PEHE (squared, not rooted) when ground truth is available.
  std::optional<double> pehe_observed;

  static double compute_bound(double control_loss, double treated_loss, double b_phi,
                              double ipm_value, double sigma_y_squared);
  std::string to_json() const;
};

/// Minimum over arms of the known outcome-noise variance, if known.
std::optional<double> sigma_y_squared(const ObservationalDataset& ds);

/// Throws ArgumentError for log-loss: the bound only holds for squared loss.
BoundReport empirical_bound(const nn::Network& net, const ObservationalDataset& ds,
                            const ipm::IpmConfig& ipm_cfg, double b_phi,
                            std::optional<double> sigma_y_sq = std::nullopt,
                            LossKind loss_kind = LossKind::squared);

/// Smallest b_phi (found by bisection to relative precision `tol`) for which
/// the report's bound reaches its observed PEHE; 0 when it already does at
/// b_phi = 0, nullopt when the IPM term is zero and the bound falls short.
std::optional<double> sufficient_b_phi(const BoundReport& report, double tol = 1e-10);

struct ConditionEstimate {
  double rho = 1.0;  // +inf when the Jacobian is singular
  Index argmax = 0;  // row of sample_xs attaining rho
  bool degenerate = false;
};

/// max over rows x of sigma_max / sigma_min of the central finite-difference
/// Jacobian of the pre-projection representation at x.
ConditionEstimate representation_condition(const nn::Network& net, const Matrix& sample_xs,
                                           double fd_step = 1e-5);

/// Central finite-difference Jacobian (k x d) of the pre-projection
/// representation at a single input row.
Matrix representation_jacobian(const nn::Network& net, const Eigen::RowVectorXd& x, double fd_step);

}  // namespace cfr::diagnostics
