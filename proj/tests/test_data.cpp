#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <boost/math/distributions/chi_squared.hpp>

#include "cfr/data.hpp"
#include "cfr/error.hpp"
#include "oracles.hpp"

using namespace cfr;

namespace {

SyntheticConfig small_cfg() {
  SyntheticConfig c;
  c.n_units = 200;
  c.n_treated_target = 60;
  c.dim = 5;
  return c;
}

Matrix rows_of(const ObservationalDataset& ds, int arm) {
  const auto idx = arm == 1 ? ds.treated_indices() : ds.control_indices();
  Matrix m(static_cast<Index>(idx.size()), ds.dim());
  for (std::size_t k = 0; k < idx.size(); ++k) m.row(static_cast<Index>(k)) = ds.covariates.row(idx[k]);
  return m;
}

double arm_mmd(const ObservationalDataset& ds) { return oracle::linear_mmd(rows_of(ds, 1), rows_of(ds, 0)); }

// Permutation p-value of the between-arm linear MMD against random relabelings.
double permutation_p(const ObservationalDataset& ds, int n_perm, std::uint64_t seed) {
  const double observed = arm_mmd(ds);
  std::mt19937_64 rng(seed);
  ObservationalDataset shuffled = ds;
  int extreme = 0;
  for (int b = 0; b < n_perm; ++b) {
    std::vector<int> t(ds.treatment.data(), ds.treatment.data() + ds.size());
    std::shuffle(t.begin(), t.end(), rng);
    for (Index i = 0; i < ds.size(); ++i) shuffled.treatment(i) = t[static_cast<std::size_t>(i)];
    if (arm_mmd(shuffled) >= observed) ++extreme;
  }
  return (extreme + 1.0) / (n_perm + 1.0);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

}  // namespace

TEST(Generate, ZeroNoiseOutcomesEqualMeans) {
  SyntheticConfig c = small_cfg();
  c.outcome_noise_std = 0.0;
  for (auto surface : {ResponseSurface::linear, ResponseSurface::exponential_nonlinear}) {
    c.response_surface = surface;
    const auto ds = generate_synthetic(c, 7);
    for (Index i = 0; i < ds.size(); ++i) {
      const double mu = ds.treatment(i) ? ds.ground_truth->mu1(i) : ds.ground_truth->mu0(i);
      EXPECT_EQ(ds.outcome(i), mu);
    }
  }
}

TEST(Generate, PaperScaleShape) {
  SyntheticConfig c;  // 747 units, 139 treated target, 25 covariates
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ds = generate_synthetic(c, seed);
    EXPECT_EQ(ds.size(), 747);
    EXPECT_EQ(ds.dim(), 25);
    EXPECT_GE(ds.treated_count(), 126);
    EXPECT_LE(ds.treated_count(), 153);
  }
}

TEST(Generate, PureFunctionOfSeed) {
  const auto a = generate_synthetic(small_cfg(), 42);
  const auto b = generate_synthetic(small_cfg(), 42);
  const auto c = generate_synthetic(small_cfg(), 43);
  EXPECT_EQ(a.covariates, b.covariates);
  EXPECT_EQ(a.treatment, b.treatment);
  EXPECT_EQ(a.outcome, b.outcome);
  EXPECT_EQ(a.ground_truth->mu0, b.ground_truth->mu0);
  EXPECT_NE(a.covariates, c.covariates);
}

TEST(Generate, NoConfoundingMatchesRandomSplit) {
  SyntheticConfig c;
  c.confounding_strength = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ds = generate_synthetic(c, seed);
    EXPECT_GT(permutation_p(ds, 200, 1000 + seed), 0.01) << "seed " << seed;
  }
}

TEST(Generate, ConfoundingIsDetectable) {
  SyntheticConfig c;
  c.confounding_strength = 1.0;
  int detected = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    detected += permutation_p(generate_synthetic(c, seed), 200, seed) <= 0.01;
  EXPECT_EQ(detected, 5);
}

TEST(Generate, InvalidConfig) {
  SyntheticConfig c = small_cfg();
  c.n_treated_target = c.n_units;
  EXPECT_THROW(generate_synthetic(c, 1), ConfigError);
  c = small_cfg();
  c.outcome_noise_std = -1.0;
  EXPECT_THROW(generate_synthetic(c, 1), ConfigError);
}

TEST(Imbalance, RemovesExactlyControls) {
  const auto ds = generate_synthetic(SyntheticConfig{}, 3);
  const auto out = induce_imbalance(ds, 0.5, 347, 9);
  EXPECT_EQ(out.size(), 400);
  EXPECT_EQ(out.treated_count(), ds.treated_count());
  EXPECT_EQ(out.control_count(), ds.control_count() - 347);
  out.validate();

  // Rows (with their ground truth) are a subset of the original rows.
  const auto removed = imbalance_removals(ds, 0.5, 347, 9);
  std::set<Index> gone(removed.begin(), removed.end());
  Index r = 0;
  for (Index i = 0; i < ds.size(); ++i) {
    if (gone.count(i)) continue;
    EXPECT_EQ(out.covariates.row(r), ds.covariates.row(i));
    EXPECT_EQ(out.ground_truth->mu1(r), ds.ground_truth->mu1(i));
    ++r;
  }
}

TEST(Imbalance, QZeroIsUniformOverControls) {
  SyntheticConfig c;
  c.n_units = 60;
  c.n_treated_target = 20;
  c.dim = 3;
  const auto ds = generate_synthetic(c, 5);
  const auto controls = ds.control_indices();
  const Index n_remove = 10;
  std::vector<double> counts(static_cast<std::size_t>(ds.size()), 0.0);
  const int reps = 4000;
  for (int s = 0; s < reps; ++s)
    for (Index i : imbalance_removals(ds, 0.0, n_remove, static_cast<std::uint64_t>(s))) counts[static_cast<std::size_t>(i)] += 1.0;

  const double expected = reps * static_cast<double>(n_remove) / static_cast<double>(controls.size());
  double chi2 = 0.0;
  for (Index i : controls) {
    const double o = counts[static_cast<std::size_t>(i)];
    chi2 += (o - expected) * (o - expected) / expected;
  }
  for (Index i : ds.treated_indices()) EXPECT_EQ(counts[static_cast<std::size_t>(i)], 0.0);
  // Inclusion indicators within one draw are negatively correlated, which only
  // makes this statistic conservative.
  boost::math::chi_squared dist(static_cast<double>(controls.size() - 1));
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.01);
}

TEST(Imbalance, QOneRemovesHighestPropensity) {
  const auto ds = generate_synthetic(SyntheticConfig{}, 11);
  const Index n_remove = 347;
  const auto removed = imbalance_removals(ds, 1.0, n_remove, 1);

  std::vector<double> label(static_cast<std::size_t>(ds.size()));
  for (Index i = 0; i < ds.size(); ++i) label[static_cast<std::size_t>(i)] = ds.treatment(i);
  const auto score = oracle::logistic_scores(ds.covariates, label, 500, 0.1);
  auto controls = ds.control_indices();
  std::stable_sort(controls.begin(), controls.end(), [&](Index a, Index b) {
    return score[static_cast<std::size_t>(a)] > score[static_cast<std::size_t>(b)];
  });
  std::set<Index> expected(controls.begin(), controls.begin() + n_remove);
  std::set<Index> got(removed.begin(), removed.end());
  EXPECT_EQ(got, expected);
}

TEST(Imbalance, TooManyRemovalsRejected) {
  const auto ds = generate_synthetic(small_cfg(), 1);
  EXPECT_THROW(induce_imbalance(ds, 0.5, ds.control_count(), 1), ArgumentError);
  EXPECT_THROW(induce_imbalance(ds, 1.5, 3, 1), ArgumentError);
}

TEST(Imbalance, Deterministic) {
  const auto ds = generate_synthetic(small_cfg(), 1);
  EXPECT_EQ(imbalance_removals(ds, 0.5, 50, 3), imbalance_removals(ds, 0.5, 50, 3));
}

TEST(Imbalance, MonotoneInQ) {
  std::vector<double> m0;
  std::vector<double> mh;
  std::vector<double> m1;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ds = generate_synthetic(SyntheticConfig{}, seed);
    m0.push_back(arm_mmd(induce_imbalance(ds, 0.0, 347, seed)));
    mh.push_back(arm_mmd(induce_imbalance(ds, 0.5, 347, seed)));
    m1.push_back(arm_mmd(induce_imbalance(ds, 1.0, 347, seed)));
  }
  EXPECT_GE(median(mh), median(m0));
  EXPECT_GE(median(m1), median(mh));
}

TEST(Split, PaperRatios) {
  EXPECT_EQ(split_sizes(1000, {0.63, 0.27, 0.10}), (std::array<Index, 3>{630, 270, 100}));
  EXPECT_EQ(split_sizes(100, {0.56, 0.24, 0.20}), (std::array<Index, 3>{56, 24, 20}));
}

TEST(Split, RemainderGoesToTrainThenValid) {
  // 0.63*10 = 6.3, 0.27*10 = 2.7, 0.1*10 = 1 -> floors 6,2,1, one row left over.
  EXPECT_EQ(split_sizes(10, {0.63, 0.27, 0.10}), (std::array<Index, 3>{7, 2, 1}));
  // floors 0,0,0 of 2 rows at thirds: train then valid.
  EXPECT_EQ(split_sizes(2, {0.34, 0.33, 0.33}), (std::array<Index, 3>{1, 1, 0}));
}

TEST(Split, PartitionProperty) {
  const auto ds = generate_synthetic(small_cfg(), 2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = split(ds, {0.63, 0.27, 0.10}, seed);
    std::vector<Index> all;
    all.insert(all.end(), s.train_index.begin(), s.train_index.end());
    all.insert(all.end(), s.valid_index.begin(), s.valid_index.end());
    all.insert(all.end(), s.test_index.begin(), s.test_index.end());
    std::sort(all.begin(), all.end());
    std::vector<Index> expected(static_cast<std::size_t>(ds.size()));
    std::iota(expected.begin(), expected.end(), Index{0});
    EXPECT_EQ(all, expected);
    for (std::size_t k = 0; k < s.test_index.size(); ++k) {
      const Index i = s.test_index[k];
      EXPECT_EQ(s.test.covariates.row(static_cast<Index>(k)), ds.covariates.row(i));
      EXPECT_EQ(s.test.ground_truth->mu0(static_cast<Index>(k)), ds.ground_truth->mu0(i));
      EXPECT_EQ(s.test.outcome(static_cast<Index>(k)), ds.outcome(i));
    }
  }
  const auto a = split(ds, {0.63, 0.27, 0.10}, 5);
  const auto b = split(ds, {0.63, 0.27, 0.10}, 5);
  EXPECT_EQ(a.train_index, b.train_index);
}

TEST(Split, EmptyPartRejected) {
  const auto ds = oracle::make_dataset(Matrix::Random(4, 2), {0, 1, 0, 1}, {1, 2, 3, 4});
  EXPECT_THROW(split(ds, {0.63, 0.27, 0.10}, 1), SplitError);
}

TEST(Split, InvalidRatios) {
  const auto ds = generate_synthetic(small_cfg(), 2);
  EXPECT_THROW(split(ds, {0.5, 0.3, 0.3}, 1), Error);
}

TEST(Csv, MinimalFile) {
  const auto ds = parse_csv("x1,x2,t,y\n1,2,0,0.5\n3,4,1,1.5\n5,6,0,2\n");
  EXPECT_EQ(ds.size(), 3);
  EXPECT_EQ(ds.dim(), 2);
  EXPECT_FALSE(ds.ground_truth.has_value());
  EXPECT_EQ(ds.covariates(2, 1), 6.0);
  EXPECT_EQ(ds.treatment(1), 1);
}

TEST(Csv, BadTreatmentCitesLine) {
  try {
    parse_csv("x1,t,y\n1,0,1\n2,1,1\n3,2,1\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4);
  }
}

TEST(Csv, MissingColumnAndNonNumeric) {
  EXPECT_THROW(parse_csv("x1,y\n1,2\n"), ParseError);
  EXPECT_THROW(parse_csv("x1,t,y\n1,0,abc\n2,1,1\n"), ParseError);
}

TEST(Csv, RoundTripIsBitwise) {
  auto ds = generate_synthetic(small_cfg(), 8);
  ds.randomized_flag = IntVector::Ones(ds.size());
  const auto back = parse_csv(to_csv(ds));
  EXPECT_EQ(back.covariates, ds.covariates);
  EXPECT_EQ(back.treatment, ds.treatment);
  EXPECT_EQ(back.outcome, ds.outcome);
  EXPECT_EQ(back.ground_truth->mu0, ds.ground_truth->mu0);
  EXPECT_EQ(back.ground_truth->mu1, ds.ground_truth->mu1);
  EXPECT_EQ(*back.randomized_flag, *ds.randomized_flag);
}

TEST(Dataset, ValidateRejectsSingleArm) {
  const auto ds = oracle::make_dataset(Matrix::Zero(3, 1), {1, 1, 1}, {0, 0, 0});
  EXPECT_THROW(ds.validate(), ArgumentError);
}
