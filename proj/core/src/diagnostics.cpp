#include "cfr/diagnostics.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

#include "cfr/error.hpp"
#include "cfr/metrics.hpp"

namespace cfr::diagnostics {

double BoundReport::compute_bound(double control_loss, double treated_loss, double b_phi,
                                  double ipm_value, double sigma_y_squared) {
  return 2.0 * (control_loss + treated_loss + b_phi * ipm_value - 2.0 * sigma_y_squared);
}

std::string BoundReport::to_json() const {
  nlohmann::ordered_json j;
  j["factual_control_loss"] = factual_control_loss;
  j["factual_treated_loss"] = factual_treated_loss;
  j["ipm_value"] = ipm_value;
  j["b_phi"] = b_phi;
  j["sigma_y_squared"] = sigma_y_squared;
  j["sigma_y_assumed_zero"] = sigma_y_assumed_zero;
  j["bound_value"] = bound_value;
  if (pehe_observed) {
    j["pehe_observed"] = *pehe_observed;
  } else {
    j["pehe_observed"] = nullptr;
  }
  return j.dump(2);
}

std::optional<double> sigma_y_squared(const ObservationalDataset& ds) {
  if (!ds.ground_truth || !ds.ground_truth->noise_known) return std::nullopt;
  const double s = std::min(ds.ground_truth->noise_std0, ds.ground_truth->noise_std1);
  return s * s;
}

BoundReport empirical_bound(const nn::Network& net, const ObservationalDataset& ds,
                            const ipm::IpmConfig& ipm_cfg, double b_phi,
                            std::optional<double> sigma_y_sq, LossKind loss_kind) {
  if (loss_kind != LossKind::squared)
    throw ArgumentError("the PEHE bound is only established for squared loss; refusing log-loss");
  if (!(b_phi > 0.0)) throw ArgumentError("b_phi must be positive");
  ds.validate();

  BoundReport r;
  r.b_phi = b_phi;
  if (!sigma_y_sq) sigma_y_sq = sigma_y_squared(ds);
  if (sigma_y_sq) {
    if (*sigma_y_sq < 0.0) throw ArgumentError("sigma_y_squared must be >= 0");
    r.sigma_y_squared = *sigma_y_sq;
  } else {
    r.sigma_y_squared = 0.0;
    r.sigma_y_assumed_zero = true;
  }

  const nn::PotentialOutcomes po = nn::predict_potential_outcomes(net, ds.covariates);
  const metrics::ItePredictions preds(po.y0, po.y1);
  const metrics::FactualLosses losses =
      metrics::factual_losses(preds.factual(ds.treatment), ds, LossKind::squared);
  r.factual_control_loss = *losses.control;
  r.factual_treated_loss = *losses.treated;

  const Matrix rep = nn::representation(net, ds.covariates);
  const auto control = ds.control_indices();
  const auto treated = ds.treated_indices();
  Matrix a(static_cast<Index>(control.size()), rep.cols());
  Matrix b(static_cast<Index>(treated.size()), rep.cols());
  for (std::size_t k = 0; k < control.size(); ++k) a.row(static_cast<Index>(k)) = rep.row(control[k]);
  for (std::size_t k = 0; k < treated.size(); ++k) b.row(static_cast<Index>(k)) = rep.row(treated[k]);
  r.ipm_value = ipm::ipm_value(a, b, ipm_cfg);

  r.bound_value = BoundReport::compute_bound(r.factual_control_loss, r.factual_treated_loss,
                                             r.b_phi, r.ipm_value, r.sigma_y_squared);
  if (ds.ground_truth) {
    const double root = metrics::pehe(preds, *ds.ground_truth);
    r.pehe_observed = root * root;
  }
  return r;
}

std::optional<double> sufficient_b_phi(const BoundReport& report, double tol) {
  if (!report.pehe_observed) throw ArgumentError("sufficient_b_phi: no observed PEHE");
  const double target = *report.pehe_observed;
  auto bound_at = [&](double b) {
    return BoundReport::compute_bound(report.factual_control_loss, report.factual_treated_loss, b,
                                      report.ipm_value, report.sigma_y_squared);
  };
  if (bound_at(0.0) >= target) return 0.0;
  if (report.ipm_value <= 0.0) return std::nullopt;
  double lo = 0.0;
  double hi = 1.0;
  while (bound_at(hi) < target) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) return std::nullopt;
  }
  while (hi - lo > tol * hi) {
    const double mid = 0.5 * (lo + hi);
    (bound_at(mid) >= target ? hi : lo) = mid;
  }
  return hi;
}

Matrix representation_jacobian(const nn::Network& net, const Eigen::RowVectorXd& x, double fd_step) {
  if (!(fd_step > 0.0)) throw ArgumentError("fd_step must be positive");
  const Index d = x.size();
  const Index k = net.architecture().rep_dim();
  // Both perturbations of every coordinate in one batch.
  Matrix probes(2 * d, d);
  for (Index j = 0; j < d; ++j) {
    probes.row(2 * j) = x;
    probes.row(2 * j + 1) = x;
    probes(2 * j, j) += fd_step;
    probes(2 * j + 1, j) -= fd_step;
  }
  const Matrix out = nn::representation_pre_projection(net, probes);
  Matrix jac(k, d);
  for (Index j = 0; j < d; ++j)
    jac.col(j) = (out.row(2 * j) - out.row(2 * j + 1)).transpose() / (2.0 * fd_step);
  return jac;
}

ConditionEstimate representation_condition(const nn::Network& net, const Matrix& sample_xs,
                                           double fd_step) {
  if (sample_xs.rows() < 1) throw ArgumentError("representation_condition: no sample points");
  if (!net.params().all_finite()) throw NumericError("representation_condition: non-finite network");
  ConditionEstimate est;
  est.rho = 0.0;
  for (Index i = 0; i < sample_xs.rows(); ++i) {
    const Matrix jac = representation_jacobian(net, sample_xs.row(i), fd_step);
    const Eigen::JacobiSVD<Matrix> svd(jac);
    const Vector& s = svd.singularValues();
    const double smax = s.maxCoeff();
    const double smin = s.minCoeff();
    double rho = 0.0;
    if (smin < 1e-12) {
      rho = std::numeric_limits<double>::infinity();
    } else {
      rho = smax / smin;
    }
    if (rho > est.rho) {
      est.rho = rho;
      est.argmax = i;
    }
  }
  est.degenerate = std::isinf(est.rho);
  return est;
}

}  // namespace cfr::diagnostics
