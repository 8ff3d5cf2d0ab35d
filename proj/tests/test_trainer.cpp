#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <random>

#include "cfr/error.hpp"
#include "cfr/trainer.hpp"
#include "oracles.hpp"

using namespace cfr;
using namespace cfr::train;

namespace {

IntVector arms(Index n_control, Index n_treated) {
  IntVector t(n_control + n_treated);
  for (Index i = 0; i < t.size(); ++i) t(i) = i < n_treated ? 1 : 0;
  return t;
}

nn::NetworkArchitecture tiny_arch(Index d) {
  nn::NetworkArchitecture a;
  a.input_dim = d;
  a.rep_layers = {8, 8};
  a.head_layers = {8};
  return a;
}

// Linear outcomes with a constant effect, both arms present.
ObservationalDataset linear_data(Index n, Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Matrix x = oracle::random_matrix(rng, n, d);
  std::vector<int> t(static_cast<std::size_t>(n));
  std::vector<double> y(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    t[static_cast<std::size_t>(i)] = x(i, 0) > 0.3 ? 1 : 0;
    double s = 0.0;
    for (Index k = 0; k < d; ++k) s += 0.5 * x(i, k);
    y[static_cast<std::size_t>(i)] = s + 2.0 * t[static_cast<std::size_t>(i)];
  }
  return oracle::make_dataset(x, t, y);
}

TrainConfig quick_cfg() {
  TrainConfig c;
  c.alpha = 0.5;
  c.batch_size = 20;
  c.max_epochs = 5;
  c.ipm.kind = ipm::IpmKind::linear_mmd;
  c.adam.step_size = 1e-2;
  return c;
}

}  // namespace

TEST(GroupWeights, HandCases) {
  GroupWeights g = group_weights(arms(2, 2));
  EXPECT_DOUBLE_EQ(g.u, 0.5);
  for (Index i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(g.weights(i), 1.0);

  g = group_weights(arms(3, 1));
  EXPECT_DOUBLE_EQ(g.u, 0.25);
  EXPECT_DOUBLE_EQ(g.weights(0), 2.0);
  EXPECT_NEAR(g.weights(1), 2.0 / 3.0, 1e-15);
}

TEST(GroupWeights, EachArmCarriesHalfTheMass) {
  for (auto [nc, nt] : {std::pair<Index, Index>{9, 1}, {3, 1}, {1, 1}, {1, 9}}) {
    const IntVector t = arms(nc, nt);
    const GroupWeights g = group_weights(t);
    double treated = 0.0;
    double control = 0.0;
    for (Index i = 0; i < t.size(); ++i) (t(i) ? treated : control) += g.weights(i);
    const double n = static_cast<double>(t.size());
    EXPECT_NEAR(treated / n, 0.5, 1e-12);
    EXPECT_NEAR(control / n, 0.5, 1e-12);
  }
}

TEST(GroupWeights, SingleArmRejected) {
  EXPECT_THROW(group_weights(arms(4, 0)), ArgumentError);
  EXPECT_THROW(group_weights(arms(0, 4)), ArgumentError);
}

TEST(Minibatch, Stratified) {
  Rng rng(1);
  const IntVector t = arms(50, 50);
  const auto idx = sample_minibatch(rng, t, 10);
  ASSERT_EQ(idx.size(), 10u);
  int treated = 0;
  for (Index i : idx) treated += t(i);
  EXPECT_EQ(treated, 5);

  const IntVector rare = arms(997, 3);
  for (int k = 0; k < 20; ++k) {
    const auto b = sample_minibatch(rng, rare, 100);
    int tr = 0;
    for (Index i : b) tr += rare(i);
    EXPECT_GE(tr, 1);
  }
}

TEST(Minibatch, NoDuplicates) {
  Rng rng(2);
  const IntVector t = arms(30, 10);
  auto idx = sample_minibatch(rng, t, 40);
  std::sort(idx.begin(), idx.end());
  EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
  EXPECT_EQ(idx.size(), 40u);
}

TEST(Minibatch, UniformWithinArm) {
  Rng rng(3);
  const IntVector t = arms(30, 20);  // batch of 10 holds 4 treated, 6 control
  std::vector<double> count(50, 0.0);
  const int draws = 10000;
  for (int k = 0; k < draws; ++k)
    for (Index i : sample_minibatch(rng, t, 10)) count[static_cast<std::size_t>(i)] += 1.0;
  auto chi2 = [&](Index lo, Index hi, double expected) {
    double s = 0.0;
    for (Index i = lo; i < hi; ++i) {
      const double c = count[static_cast<std::size_t>(i)];
      s += (c - expected) * (c - expected) / expected;
    }
    return s;
  };
  const boost::math::chi_squared treated_dist(19);
  const boost::math::chi_squared control_dist(29);
  EXPECT_GT(boost::math::cdf(boost::math::complement(treated_dist, chi2(0, 20, draws * 4.0 / 20))), 1e-3);
  EXPECT_GT(boost::math::cdf(boost::math::complement(control_dist, chi2(20, 50, draws * 6.0 / 30))), 1e-3);
}

TEST(Step, AlphaZeroSkipsIpm) {
  const ObservationalDataset ds = linear_data(40, 3, 1);
  TrainConfig c = quick_cfg();
  c.alpha = 0.0;
  Trainer tr(nn::Network::init(tiny_arch(3), 1), c);
  const std::vector<Index> idx = {0, 1, 2, 3, 4, 5, 6, 7};
  const std::vector<double> w(8, 1.0);
  const auto before = ipm::evaluation_count();
  tr.step(ds, idx, w);
  tr.objective(ds);
  EXPECT_EQ(ipm::evaluation_count(), before);
}

TEST(Step, SingleAdamStepMatchesHandRolled) {
  const ObservationalDataset ds = linear_data(30, 3, 2);
  TrainConfig c = quick_cfg();
  c.alpha = 0.0;
  c.weight_decay_lambda = 0.0;
  const nn::Network start = nn::Network::init(tiny_arch(3), 4);
  Trainer tr(start, c);
  std::vector<Index> idx(30);
  std::iota(idx.begin(), idx.end(), Index{0});
  const std::vector<double> w(30, 1.0);
  tr.step(ds, idx, w);

  const auto bw = nn::backward(start, ds.covariates, ds.treatment, ds.outcome, Vector::Ones(30),
                               LossKind::squared);
  // First Adam step: bias-corrected moments are g and g^2.
  nn::Network expect = start;
  auto p = expect.params().tensors();
  auto g = bw.loss_grad.tensors();
  for (std::size_t k = 0; k < p.size(); ++k)
    for (std::size_t i = 0; i < p[k].values.size(); ++i) {
      const double gi = g[k][i];
      const double m_hat = (1 - c.adam.beta1) * gi / (1 - c.adam.beta1);
      const double v_hat = (1 - c.adam.beta2) * gi * gi / (1 - c.adam.beta2);
      p[k].values[i] -= c.adam.step_size * m_hat / (std::sqrt(v_hat) + c.adam.epsilon);
    }
  auto got = tr.network().params().tensors();
  auto want = std::as_const(expect.params()).tensors();
  for (std::size_t k = 0; k < got.size(); ++k)
    for (std::size_t i = 0; i < want[k].size(); ++i) EXPECT_NEAR(got[k][i], want[k][i], 1e-10);
}

TEST(Step, WeightDecayOnlyContractsHeadWeights) {
  const ObservationalDataset ds = linear_data(20, 3, 3);
  TrainConfig c = quick_cfg();
  c.alpha = 0.0;
  c.weight_decay_lambda = 0.1;
  const nn::Network start = nn::Network::init(tiny_arch(3), 5);
  Trainer tr(start, c);
  std::vector<Index> idx(20);
  std::iota(idx.begin(), idx.end(), Index{0});
  tr.step(ds, idx, std::vector<double>(20, 0.0));  // zero loss weights: decay is the only force

  const auto& a = start.params();
  const auto& b = tr.network().params();
  for (std::size_t l = 0; l < a.rep.size(); ++l) {
    EXPECT_TRUE(a.rep[l].weight == b.rep[l].weight);
    EXPECT_TRUE(a.rep[l].bias == b.rep[l].bias);
  }
  for (int arm = 0; arm < 2; ++arm)
    for (std::size_t l = 0; l < a.head(arm).size(); ++l) {
      EXPECT_TRUE(a.head(arm)[l].bias == b.head(arm)[l].bias);
      const Matrix& v0 = a.head(arm)[l].weight;
      const Matrix& v1 = b.head(arm)[l].weight;
      for (Index i = 0; i < v0.size(); ++i)
        if (std::abs(v0(i)) > 1e-2) EXPECT_LT(std::abs(v1(i)), std::abs(v0(i)));
    }
}

TEST(Objective, Decomposition) {
  const ObservationalDataset ds = linear_data(40, 3, 6);
  TrainConfig c = quick_cfg();
  c.square_linear_mmd = false;
  c.weight_decay_lambda = 0.03;
  const nn::Network net = nn::Network::init(tiny_arch(3), 6);
  const Trainer tr(net, c);
  const ObjectiveTerms o = tr.objective(ds);

  // Independent recomputation.
  const double u = static_cast<double>(ds.treated_count()) / 40.0;
  const Vector pred = nn::forward(net, ds.covariates, ds.treatment);
  double loss = 0.0;
  for (Index i = 0; i < 40; ++i) {
    const double w = ds.treatment(i) ? 1 / (2 * u) : 1 / (2 * (1 - u));
    loss += w * (pred(i) - ds.outcome(i)) * (pred(i) - ds.outcome(i));
  }
  loss /= 40.0;
  const Matrix rep = nn::representation(net, ds.covariates);
  const ObservationalDataset c0 = ds.rows(ds.control_indices());
  const ObservationalDataset c1 = ds.rows(ds.treated_indices());
  const double ipm = oracle::linear_mmd(nn::representation(net, c0.covariates),
                                        nn::representation(net, c1.covariates));
  double v2 = 0.0;
  for (int arm = 0; arm < 2; ++arm)
    for (const auto& l : net.params().head(arm)) v2 += l.weight.squaredNorm();

  EXPECT_NEAR(o.factual_loss, loss, 1e-10);
  EXPECT_NEAR(o.ipm_value, ipm, 1e-10);
  EXPECT_NEAR(o.total(), loss + 0.5 * ipm + 0.03 * v2, 1e-10);
}

TEST(Train, DeterministicForSeed) {
  const ObservationalDataset tr = linear_data(60, 3, 7);
  const ObservationalDataset va = linear_data(30, 3, 8);
  const auto a = cfr::train::train(nn::Network::init(tiny_arch(3), 1), tr, va, quick_cfg());
  const auto b = cfr::train::train(nn::Network::init(tiny_arch(3), 1), tr, va, quick_cfg());
  EXPECT_TRUE(a.network == b.network);
  EXPECT_EQ(a.trace.to_csv(), b.trace.to_csv());
  TrainConfig other = quick_cfg();
  other.seed = 2;
  const auto c = cfr::train::train(nn::Network::init(tiny_arch(3), 1), tr, va, other);
  EXPECT_FALSE(a.network == c.network);
}

TEST(Train, ReturnsBestSnapshotAndLearns) {
  const ObservationalDataset tr = linear_data(200, 3, 9);
  const ObservationalDataset va = linear_data(80, 3, 10);
  TrainConfig c = quick_cfg();
  c.alpha = 0.0;
  c.weight_decay_lambda = 0.0;
  c.max_epochs = 150;
  c.early_stop_patience = 1000;
  const auto r = cfr::train::train(nn::Network::init(tiny_arch(3), 3), tr, va, c);
  ASSERT_EQ(r.trace.epochs.size(), 151u);
  double best = r.trace.epochs[0].valid_objective;
  for (const auto& e : r.trace.epochs) best = std::min(best, e.valid_objective);
  EXPECT_EQ(r.trace.best_valid_objective, best);
  EXPECT_EQ(r.trace.epochs[static_cast<std::size_t>(r.trace.best_epoch)].valid_objective, best);
  Trainer check(r.network, c);
  EXPECT_NEAR(check.objective(va).without_decay(), best, 1e-12);
  EXPECT_LT(r.trace.epochs.back().factual_loss, 0.1 * r.trace.epochs[0].factual_loss);
}

TEST(Train, EarlyStopping) {
  const ObservationalDataset tr = linear_data(60, 3, 11);
  const ObservationalDataset va = linear_data(30, 3, 12);
  TrainConfig c = quick_cfg();
  c.max_epochs = 500;
  c.early_stop_patience = 2;
  c.adam.step_size = 0.5;  // noisy enough to stall quickly
  const auto r = cfr::train::train(nn::Network::init(tiny_arch(3), 1), tr, va, c);
  EXPECT_EQ(r.trace.stopping_reason, StopReason::early_stopping);
  EXPECT_LT(r.trace.epochs.size(), 501u);
}

TEST(Train, DivergenceIsTrainingError) {
  ObservationalDataset tr = linear_data(40, 3, 13);
  tr.outcome *= 1e200;
  const ObservationalDataset va = tr;
  EXPECT_THROW(cfr::train::train(nn::Network::init(tiny_arch(3), 1), tr, va, quick_cfg()), TrainingError);
}

TEST(Config, Validation) {
  TrainConfig c;
  c.alpha = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.adam.beta1 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}
