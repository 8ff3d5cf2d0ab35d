#include "cfr/logistic.hpp"

#include <cmath>

#include "cfr/error.hpp"

namespace cfr {

void column_standardization(const Matrix& x, Vector& mean, Vector& scale) {
  const Index n = x.rows();
  mean = x.colwise().mean().transpose();
  scale.resize(x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - mean(j)).square().sum() / static_cast<double>(n);
    scale(j) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
}

Vector LogisticFit::linear_index(const Matrix& x) const {
  const Matrix z = (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  return (z * weights).array() + intercept;
}

Vector LogisticFit::predict_proba(const Matrix& x) const {
  return linear_index(x).unaryExpr([](double v) { return sigmoid(v); });
}

LogisticFit fit_logistic(const Matrix& x, const Vector& y, const LogisticOptions& opts) {
  if (x.rows() != y.size()) throw ArgumentError("fit_logistic: row count mismatch");
  if (x.rows() == 0) throw ArgumentError("fit_logistic: empty input");
  LogisticFit fit;
  column_standardization(x, fit.mean, fit.scale);
  const Matrix z = (x.rowwise() - fit.mean.transpose()).array().rowwise() / fit.scale.transpose().array();
  const double n = static_cast<double>(x.rows());
  fit.weights = Vector::Zero(x.cols());
  fit.intercept = 0.0;
  for (int it = 0; it < opts.iterations; ++it) {
    const Vector p = ((z * fit.weights).array() + fit.intercept)
                         .unaryExpr([](double v) { return sigmoid(v); })
                         .matrix();
    const Vector r = p - y;
    fit.weights -= opts.step * (z.transpose() * r) / n;
    fit.intercept -= opts.step * r.sum() / n;
    if (!fit.weights.allFinite() || !std::isfinite(fit.intercept)) {
      throw NumericError("logistic regression diverged at iteration " + std::to_string(it));
    }
  }
  return fit;
}

}  // namespace cfr
