#include "cfr/baselines.hpp"

#include <algorithm>
#include <numeric>

#include "cfr/error.hpp"

namespace cfr::baselines {
namespace {

Matrix with_intercept(const Matrix& features) {
  Matrix design(features.rows(), features.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(features.cols()) = features;
  return design;
}

Matrix with_treatment(const Matrix& x, double t) {
  Matrix f(x.rows(), x.cols() + 1);
  f.leftCols(x.cols()) = x;
  f.col(x.cols()).setConstant(t);
  return f;
}

LinearModel fit_for(const ObservationalDataset& ds, const Matrix& features, const Vector& y) {
  return ds.outcome_kind == OutcomeKind::binary ? fit_logistic_model(features, y)
                                                : fit_least_squares(features, y);
}

ObservationalDataset arm_rows(const ObservationalDataset& ds, int arm) {
  const auto idx = arm == 1 ? ds.treated_indices() : ds.control_indices();
  if (idx.empty()) throw ArgumentError("baseline: treatment arm " + std::to_string(arm) + " is empty");
  return ds.rows(idx);
}

}  // namespace

Vector LinearModel::predict(const Matrix& features) const {
  if (kind == LinearKind::logistic) return logistic.predict_proba(features);
  if (features.cols() + 1 != coefficients.size())
    throw ArgumentError("LinearModel: feature count does not match the coefficients");
  return with_intercept(features) * coefficients;
}

LinearModel fit_least_squares(const Matrix& features, const Vector& y) {
  if (features.rows() != y.size()) throw ArgumentError("least squares: row count mismatch");
  const Matrix design = with_intercept(features);
  LinearModel model;
  model.kind = LinearKind::least_squares;
  const Eigen::ColPivHouseholderQR<Matrix> qr(design);
  if (design.rows() >= design.cols() && qr.rank() == design.cols()) {
    model.coefficients = qr.solve(y);
  } else {
    const Matrix gram =
        design.transpose() * design + kRidge * Matrix::Identity(design.cols(), design.cols());
    model.coefficients = gram.ldlt().solve(design.transpose() * y);
    model.ridge_engaged = true;
  }
  if (!model.coefficients.allFinite()) throw NumericError("least squares: non-finite coefficients");
  return model;
}

LinearModel fit_logistic_model(const Matrix& features, const Vector& y) {
  LinearModel model;
  model.kind = LinearKind::logistic;
  model.logistic = fit_logistic(features, y, LogisticOptions{2000, 0.1});
  model.coefficients.resize(model.logistic.weights.size() + 1);
  model.coefficients << model.logistic.intercept, model.logistic.weights;
  return model;
}

LinearModel fit_variant1(const ObservationalDataset& ds) {
  ds.validate();
  Matrix features(ds.size(), ds.dim() + 1);
  features.leftCols(ds.dim()) = ds.covariates;
  features.col(ds.dim()) = ds.treatment.cast<double>();
  return fit_for(ds, features, ds.outcome);
}

metrics::ItePredictions predict_variant1(const LinearModel& model, const Matrix& x) {
  return {model.predict(with_treatment(x, 0.0)), model.predict(with_treatment(x, 1.0))};
}

double predict_ite_variant1(const LinearModel& model, const Eigen::RowVectorXd& x) {
  return predict_variant1(model, Matrix(x)).tau_hat()(0);
}

Variant2 fit_variant2(const ObservationalDataset& ds) {
  ds.validate();
  const ObservationalDataset c = arm_rows(ds, 0);
  const ObservationalDataset t = arm_rows(ds, 1);
  return {fit_for(ds, c.covariates, c.outcome), fit_for(ds, t.covariates, t.outcome)};
}

metrics::ItePredictions predict_variant2(const Variant2& model, const Matrix& x) {
  return {model.control.predict(x), model.treated.predict(x)};
}

double predict_ite_variant2(const Variant2& model, const Eigen::RowVectorXd& x) {
  return predict_variant2(model, Matrix(x)).tau_hat()(0);
}

metrics::ItePredictions knn_predict(const ObservationalDataset& ds, Index k, const Matrix& queries) {
  if (k < 1) throw ArgumentError("knn: k must be at least 1");
  if (queries.cols() != ds.dim()) throw ArgumentError("knn: query dimension mismatch");
  const auto treated = ds.treated_indices();
  const auto control = ds.control_indices();
  if (static_cast<Index>(treated.size()) < k || static_cast<Index>(control.size()) < k)
    throw ArgumentError("knn: each treatment arm needs at least k=" + std::to_string(k) + " rows");
  Vector mean;
  Vector scale;
  column_standardization(ds.covariates, mean, scale);
  const Matrix z =
      (ds.covariates.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  const Matrix zq =
      (queries.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();

  auto arm_mean = [&](const std::vector<Index>& arm, const Eigen::RowVectorXd& q) {
    std::vector<std::pair<double, Index>> dist;
    dist.reserve(arm.size());
    for (Index i : arm) dist.emplace_back((z.row(i) - q).squaredNorm(), i);
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    double s = 0.0;
    for (Index r = 0; r < k; ++r) s += ds.outcome(dist[static_cast<std::size_t>(r)].second);
    return s / static_cast<double>(k);
  };

  Vector y0(queries.rows());
  Vector y1(queries.rows());
  for (Index r = 0; r < queries.rows(); ++r) {
    const Eigen::RowVectorXd q = zq.row(r);
    y0(r) = arm_mean(control, q);
    y1(r) = arm_mean(treated, q);
  }
  return {std::move(y0), std::move(y1)};
}

double knn_ite(const ObservationalDataset& ds, Index k, const Eigen::RowVectorXd& query) {
  return knn_predict(ds, k, Matrix(query)).tau_hat()(0);
}

}  // namespace cfr::baselines
