#pragma once

#include <cmath>

#include "cfr/types.hpp"

namespace cfr {

/// Logistic regression fitted by full-batch gradient descent on
/// standardized inputs. Coefficients live in the standardized space; predict
/// applies the stored standardization.
struct LogisticFit {
  Vector mean;
  Vector scale;
  Vector weights;
  double intercept = 0.0;

  Vector predict_proba(const Matrix& x) const;
  Vector linear_index(const Matrix& x) const;
};

struct LogisticOptions {
  int iterations = 500;
  double step = 0.1;
};

/// Throws NumericError if the iterates become non-finite.
LogisticFit fit_logistic(const Matrix& x, const Vector& y, const LogisticOptions& opts = {});

/// Per-column mean and standard deviation; zero-variance columns get scale 1.
void column_standardization(const Matrix& x, Vector& mean, Vector& scale);

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace cfr
