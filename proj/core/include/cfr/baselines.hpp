#pragma once

#include "cfr/data.hpp"
#include "cfr/logistic.hpp"
#include "cfr/metrics.hpp"

namespace cfr::baselines {

enum class LinearKind { least_squares, logistic };

/// Linear outcome model. For least squares the coefficients act on raw
/// features [1, x (, t)]; the logistic kind stores its own standardization.
struct LinearModel {
  LinearKind kind = LinearKind::least_squares;
  Vector coefficients;  // intercept first; for variant 1 the t coefficient last
  LogisticFit logistic;  // used when kind == logistic
  bool ridge_engaged = false;

  /// Prediction for a feature row (without the intercept column).
  Vector predict(const Matrix& features) const;
};

inline constexpr double kRidge = 1e-8;

/// Least squares with an intercept. Falls back to ridge kRidge (flagged) when
/// the design is rank deficient.
LinearModel fit_least_squares(const Matrix& features, const Vector& y);

/// Logistic regression by full-batch gradient descent (2000 iterations, step
/// 0.1, standardized inputs).
LinearModel fit_logistic_model(const Matrix& features, const Vector& y);

/// One model on [x, t]; the kind follows the dataset's outcome kind.
LinearModel fit_variant1(const ObservationalDataset& ds);
/// f(x,1) and f(x,0) from the single model.
metrics::ItePredictions predict_variant1(const LinearModel& model, const Matrix& x);
double predict_ite_variant1(const LinearModel& model, const Eigen::RowVectorXd& x);

/// Separate models fitted on each arm's rows.
struct Variant2 {
  LinearModel control;
  LinearModel treated;
};
Variant2 fit_variant2(const ObservationalDataset& ds);
metrics::ItePredictions predict_variant2(const Variant2& model, const Matrix& x);
double predict_ite_variant2(const Variant2& model, const Eigen::RowVectorXd& x);

/// k-NN potential outcomes: mean outcome of the k nearest treated and k
/// nearest control units in covariate space standardized by `ds`; ties go to
/// the lower index. A query that is itself a training row may match itself.
metrics::ItePredictions knn_predict(const ObservationalDataset& ds, Index k, const Matrix& queries);
double knn_ite(const ObservationalDataset& ds, Index k, const Eigen::RowVectorXd& query);

}  // namespace cfr::baselines
