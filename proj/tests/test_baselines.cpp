#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "cfr/baselines.hpp"
#include "cfr/error.hpp"
#include "oracles.hpp"

using namespace cfr;
using namespace cfr::baselines;

namespace {

// Normal-equations solve, written with an explicit Gram matrix.
Vector normal_equations(const Matrix& features, const Vector& y) {
  const Index n = features.rows();
  const Index p = features.cols() + 1;
  Matrix gram = Matrix::Zero(p, p);
  Vector rhs = Vector::Zero(p);
  for (Index i = 0; i < n; ++i) {
    std::vector<double> row(static_cast<std::size_t>(p));
    row[0] = 1.0;
    for (Index k = 1; k < p; ++k) row[static_cast<std::size_t>(k)] = features(i, k - 1);
    for (Index a = 0; a < p; ++a) {
      rhs(a) += row[static_cast<std::size_t>(a)] * y(i);
      for (Index b = 0; b < p; ++b) gram(a, b) += row[static_cast<std::size_t>(a)] * row[static_cast<std::size_t>(b)];
    }
  }
  return gram.fullPivLu().solve(rhs);
}

ObservationalDataset random_ds(std::mt19937_64& rng, Index n, Index d) {
  ObservationalDataset ds;
  ds.covariates = oracle::random_matrix(rng, n, d);
  ds.treatment.resize(n);
  for (Index i = 0; i < n; ++i) ds.treatment(i) = static_cast<int>(i % 2);
  ds.outcome = oracle::random_matrix(rng, n, 1).col(0);
  return ds;
}

// Mean of the k nearest rows of one arm by full sort of standardized distances.
double brute_arm_mean(const ObservationalDataset& ds, int arm, Index k, const Eigen::RowVectorXd& q) {
  const Index n = ds.size();
  const Index d = ds.dim();
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  std::vector<double> sd(static_cast<std::size_t>(d), 0.0);
  for (Index c = 0; c < d; ++c) {
    for (Index i = 0; i < n; ++i) mean[static_cast<std::size_t>(c)] += ds.covariates(i, c) / static_cast<double>(n);
    for (Index i = 0; i < n; ++i) {
      const double e = ds.covariates(i, c) - mean[static_cast<std::size_t>(c)];
      sd[static_cast<std::size_t>(c)] += e * e / static_cast<double>(n);
    }
    sd[static_cast<std::size_t>(c)] = std::sqrt(sd[static_cast<std::size_t>(c)]);
  }
  std::vector<std::pair<double, Index>> all;
  for (Index i = 0; i < n; ++i) {
    if (ds.treatment(i) != arm) continue;
    double s = 0.0;
    for (Index c = 0; c < d; ++c) {
      const double diff = (ds.covariates(i, c) - q(c)) / sd[static_cast<std::size_t>(c)];
      s += diff * diff;
    }
    all.emplace_back(s, i);
  }
  std::sort(all.begin(), all.end());
  double out = 0.0;
  for (Index r = 0; r < k; ++r) out += ds.outcome(all[static_cast<std::size_t>(r)].second);
  return out / static_cast<double>(k);
}

}  // namespace

TEST(Variant1, RecoversConstantEffect) {
  std::mt19937_64 rng(1);
  ObservationalDataset ds = random_ds(rng, 40, 3);
  const Vector beta = (Vector(3) << 1.0, -2.0, 0.5).finished();
  const double gamma = 1.7;
  ds.outcome = ds.covariates * beta + gamma * ds.treatment.cast<double>();
  const LinearModel m = fit_variant1(ds);
  EXPECT_FALSE(m.ridge_engaged);
  const auto p = predict_variant1(m, oracle::random_matrix(rng, 10, 3));
  for (Index i = 0; i < 10; ++i) EXPECT_NEAR(p.tau_hat()(i), gamma, 1e-8);
}

TEST(Variant1, EffectIsConstantAcrossX) {
  std::mt19937_64 rng(2);
  const ObservationalDataset ds = random_ds(rng, 30, 4);
  const LinearModel m = fit_variant1(ds);
  const auto p = predict_variant1(m, oracle::random_matrix(rng, 8, 4));
  for (Index i = 1; i < 8; ++i) EXPECT_NEAR(p.tau_hat()(i), p.tau_hat()(0), 1e-12);
  EXPECT_NEAR(p.tau_hat()(0), m.coefficients(m.coefficients.size() - 1), 1e-12);
}

TEST(Variant1, MatchesNormalEquations) {
  std::mt19937_64 rng(3);
  const ObservationalDataset ds = random_ds(rng, 20, 3);
  Matrix features(20, 4);
  features.leftCols(3) = ds.covariates;
  features.col(3) = ds.treatment.cast<double>();
  const LinearModel m = fit_variant1(ds);
  const Vector want = normal_equations(features, ds.outcome);
  for (Index k = 0; k < want.size(); ++k) EXPECT_NEAR(m.coefficients(k), want(k), 1e-8);
}

TEST(Variant2, NoiselessArmSurfaces) {
  std::mt19937_64 rng(4);
  ObservationalDataset ds = random_ds(rng, 60, 3);
  const Vector b0 = (Vector(3) << 1.0, 0.0, -1.0).finished();
  const Vector b1 = (Vector(3) << -0.5, 2.0, 0.3).finished();
  GroundTruth g;
  g.mu0 = (ds.covariates * b0).array() + 0.2;
  g.mu1 = (ds.covariates * b1).array() - 1.0;
  for (Index i = 0; i < 60; ++i) ds.outcome(i) = ds.treatment(i) ? g.mu1(i) : g.mu0(i);
  ds.ground_truth = g;
  const Variant2 m = fit_variant2(ds);
  EXPECT_LT(metrics::pehe(predict_variant2(m, ds.covariates), ds), 1e-6);
}

TEST(Variant2, MatchesPerArmNormalEquations) {
  std::mt19937_64 rng(5);
  const ObservationalDataset ds = random_ds(rng, 30, 2);
  const Variant2 m = fit_variant2(ds);
  for (int arm = 0; arm < 2; ++arm) {
    const auto idx = arm ? ds.treated_indices() : ds.control_indices();
    const ObservationalDataset part = ds.rows(idx);
    const Vector want = normal_equations(part.covariates, part.outcome);
    const LinearModel& got = arm ? m.treated : m.control;
    for (Index k = 0; k < want.size(); ++k) EXPECT_NEAR(got.coefficients(k), want(k), 1e-8);
  }
}

TEST(Variant2, RidgeFallbackOnSmallArm) {
  std::mt19937_64 rng(6);
  ObservationalDataset ds = random_ds(rng, 20, 5);
  ds.treatment.setZero();
  ds.treatment(0) = 1;
  ds.treatment(1) = 1;
  ds.treatment(2) = 1;  // 3 treated rows < d + 1 = 6
  const Variant2 m = fit_variant2(ds);
  EXPECT_TRUE(m.treated.ridge_engaged);
  EXPECT_FALSE(m.control.ridge_engaged);
  EXPECT_TRUE(m.treated.coefficients.allFinite());
}

TEST(Variant2, IdenticalSurfacesMatchVariant1) {
  std::mt19937_64 rng(7);
  ObservationalDataset ds = random_ds(rng, 50, 3);
  const Vector beta = (Vector(3) << 0.3, -1.0, 2.0).finished();
  ds.outcome = (ds.covariates * beta).array() + 0.5;
  const Matrix q = oracle::random_matrix(rng, 10, 3);
  const auto a = predict_variant1(fit_variant1(ds), q);
  const auto b = predict_variant2(fit_variant2(ds), q);
  for (Index i = 0; i < 10; ++i) {
    EXPECT_NEAR(a.y0_hat()(i), b.y0_hat()(i), 1e-8);
    EXPECT_NEAR(a.y1_hat()(i), b.y1_hat()(i), 1e-8);
  }
}

TEST(Logistic, PredictionsInUnitIntervalAndMatchOracle) {
  std::mt19937_64 rng(8);
  ObservationalDataset ds = random_ds(rng, 80, 2);
  ds.outcome_kind = OutcomeKind::binary;
  std::vector<double> y(80);
  for (Index i = 0; i < 80; ++i) {
    ds.outcome(i) = ds.covariates(i, 0) + 0.5 * ds.treatment(i) + 0.3 * ds.covariates(i, 1) > 0 ? 1.0 : 0.0;
    if (i % 7 == 0) ds.outcome(i) = 1.0 - ds.outcome(i);  // keep the data non-separable
    y[static_cast<std::size_t>(i)] = ds.outcome(i);
  }
  const LinearModel m = fit_variant1(ds);
  EXPECT_EQ(m.kind, LinearKind::logistic);
  const auto p = predict_variant1(m, ds.covariates);
  for (Index i = 0; i < 80; ++i) {
    EXPECT_GT(p.y0_hat()(i), 0.0);
    EXPECT_LT(p.y1_hat()(i), 1.0);
  }
  Matrix features(80, 3);
  features.leftCols(2) = ds.covariates;
  features.col(2) = ds.treatment.cast<double>();
  const auto scores = oracle::logistic_scores(features, y, 2000, 0.1);
  const Vector idx = m.logistic.linear_index(features);
  for (Index i = 0; i < 80; ++i) EXPECT_NEAR(idx(i), scores[static_cast<std::size_t>(i)], 1e-8);
}

TEST(Knn, SinglePairHandCase) {
  ObservationalDataset ds;
  ds.covariates.resize(4, 1);
  ds.covariates << 0.0, 1.0, 5.0, 9.0;
  ds.treatment = (IntVector(4) << 1, 0, 0, 1).finished();
  ds.outcome = (Vector(4) << 10.0, 3.0, 7.0, 1.0).finished();
  // Query the treated point at 0: it matches itself; nearest control is at 1.
  EXPECT_DOUBLE_EQ(knn_ite(ds, 1, Eigen::RowVectorXd::Constant(1, 0.0)), 10.0 - 3.0);
}

TEST(Knn, MatchesBruteForce) {
  std::mt19937_64 rng(9);
  ObservationalDataset ds = random_ds(rng, 30, 3);
  ds.covariates.col(2) *= 25.0;
  const Matrix q = oracle::random_matrix(rng, 12, 3);
  const auto p = knn_predict(ds, 3, q);
  for (Index r = 0; r < q.rows(); ++r) {
    EXPECT_NEAR(p.y1_hat()(r), brute_arm_mean(ds, 1, 3, q.row(r)), 1e-12);
    EXPECT_NEAR(p.y0_hat()(r), brute_arm_mean(ds, 0, 3, q.row(r)), 1e-12);
  }
}

TEST(Knn, DuplicationOracle) {
  std::mt19937_64 rng(10);
  const ObservationalDataset ds = random_ds(rng, 20, 2);
  std::vector<Index> twice;
  for (Index i = 0; i < 20; ++i) {
    twice.push_back(i);
    twice.push_back(i);
  }
  const ObservationalDataset dup = ds.rows(twice);
  const Matrix q = oracle::random_matrix(rng, 10, 2);
  const auto a = knn_predict(ds, 1, q);
  const auto b = knn_predict(dup, 2, q);
  for (Index r = 0; r < 10; ++r) EXPECT_NEAR(a.tau_hat()(r), b.tau_hat()(r), 1e-12);
}

TEST(Knn, ArmSmallerThanK) {
  std::mt19937_64 rng(11);
  const ObservationalDataset ds = random_ds(rng, 6, 2);
  EXPECT_THROW(knn_predict(ds, 4, ds.covariates), ArgumentError);
  EXPECT_THROW(knn_predict(ds, 0, ds.covariates), ArgumentError);
}
