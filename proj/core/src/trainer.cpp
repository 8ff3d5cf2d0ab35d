#include "cfr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "cfr/error.hpp"

namespace cfr::train {

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
  if (!(weight_decay_lambda >= 0.0) || !std::isfinite(weight_decay_lambda))
    throw ConfigError("weight_decay_lambda must be >= 0");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be at least 1");
  if (!(adam.step_size > 0.0)) throw ConfigError("adam step_size must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("adam beta1 must lie in [0,1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("adam beta2 must lie in [0,1)");
  if (!(adam.epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
  ipm.validate();
}

GroupWeights group_weights(const IntVector& t) {
  const Index n = t.size();
  if (n == 0) throw ArgumentError("group_weights: empty treatment vector");
  Index treated = 0;
  for (Index i = 0; i < n; ++i) {
    if (t(i) != 0 && t(i) != 1) throw ArgumentError("group_weights: treatment outside {0,1}");
    treated += t(i);
  }
  if (treated == 0 || treated == n)
    throw ArgumentError("group_weights: both treatment arms must be present (0 < u < 1)");
  GroupWeights out;
  out.u = static_cast<double>(treated) / static_cast<double>(n);
  const double w1 = 1.0 / (2.0 * out.u);
  const double w0 = 1.0 / (2.0 * (1.0 - out.u));
  out.weights.resize(n);
  for (Index i = 0; i < n; ++i) out.weights(i) = t(i) == 1 ? w1 : w0;
  return out;
}

std::vector<Index> sample_minibatch(Rng& rng, const IntVector& t, Index batch_size) {
  std::vector<Index> treated;
  std::vector<Index> control;
  for (Index i = 0; i < t.size(); ++i) (t(i) == 1 ? treated : control).push_back(i);
  const Index n = t.size();
  const Index nt = static_cast<Index>(treated.size());
  const Index nc = static_cast<Index>(control.size());
  const Index bs = std::min(batch_size, n);
  const double u = static_cast<double>(nt) / static_cast<double>(n);
  Index kt = static_cast<Index>(std::llround(static_cast<double>(bs) * u));
  if (nt > 0 && nc > 0 && bs >= 2) kt = std::clamp<Index>(kt, 1, bs - 1);
  kt = std::min(kt, nt);
  Index kc = bs - kt;
  if (kc > nc) {
    kc = nc;
    kt = bs - kc;
  }
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(bs));
  std::sample(treated.begin(), treated.end(), std::back_inserter(out), kt, rng);
  std::sample(control.begin(), control.end(), std::back_inserter(out), kc, rng);
  return out;
}

PenaltyEvaluation ipm_penalty(const Matrix& rep, const IntVector& t, const TrainConfig& cfg) {
  PenaltyEvaluation out;
  out.rep_grad = Matrix::Zero(rep.rows(), rep.cols());
  std::vector<Index> control;
  std::vector<Index> treated;
  for (Index i = 0; i < t.size(); ++i) (t(i) == 1 ? treated : control).push_back(i);
  const std::size_t min_group = cfg.ipm.kind == ipm::IpmKind::rbf_mmd ? 2 : 1;
  // A batch lacking a usable group contributes no penalty.
  if (control.size() < min_group || treated.size() < min_group) return out;

  Matrix a(static_cast<Index>(control.size()), rep.cols());
  Matrix b(static_cast<Index>(treated.size()), rep.cols());
  for (std::size_t r = 0; r < control.size(); ++r) a.row(static_cast<Index>(r)) = rep.row(control[r]);
  for (std::size_t r = 0; r < treated.size(); ++r) b.row(static_cast<Index>(r)) = rep.row(treated[r]);

  const ipm::IpmEvaluation eval = ipm::ipm_value_and_gradient(a, b, cfg.ipm);
  out.ipm_value = eval.value;
  double scale = cfg.alpha;
  if (cfg.ipm.kind == ipm::IpmKind::linear_mmd && cfg.square_linear_mmd) {
    out.penalty = cfg.alpha * eval.value * eval.value;
    scale = 2.0 * cfg.alpha * eval.value;
  } else {
    out.penalty = cfg.alpha * eval.value;
  }
  for (std::size_t r = 0; r < control.size(); ++r)
    out.rep_grad.row(control[r]) = scale * eval.gradient.grad_a.row(static_cast<Index>(r));
  for (std::size_t r = 0; r < treated.size(); ++r)
    out.rep_grad.row(treated[r]) = scale * eval.gradient.grad_b.row(static_cast<Index>(r));
  return out;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(nn::Network net, TrainConfig cfg)
    : net_(std::move(net)), cfg_(std::move(cfg)) {
  cfg_.validate();
  m_ = net_.params().zeros_like();
  v_ = net_.params().zeros_like();
}

StepResult Trainer::step(const ObservationalDataset& ds, std::span<const Index> batch,
                         std::span<const double> sample_weights) {
  if (batch.size() != sample_weights.size())
    throw ArgumentError("step: batch and sample weights differ in length");
  const ObservationalDataset b = ds.rows(batch);
  const Vector w = Eigen::Map<const Vector>(sample_weights.data(),
                                            static_cast<Index>(sample_weights.size()));
  StepResult result;
  std::optional<Matrix> upstream;
  if (cfg_.alpha > 0.0) {
    const Matrix rep = nn::representation(net_, b.covariates);
    PenaltyEvaluation pen = ipm_penalty(rep, b.treatment, cfg_);
    result.batch_ipm = pen.ipm_value;
    upstream = std::move(pen.rep_grad);
  }
  const nn::BackwardResult bw =
      nn::backward(net_, b.covariates, b.treatment, b.outcome, w, cfg_.loss_kind, upstream);
  result.batch_loss = bw.loss;

  // Total gradient: representation alpha*g1 + g3, heads g2 + 2*lambda*V.
  nn::Gradients grad = bw.loss_grad;
  for (std::size_t l = 0; l < grad.rep.size(); ++l) {
    grad.rep[l].weight += bw.upstream_grad.rep[l].weight;
    grad.rep[l].bias += bw.upstream_grad.rep[l].bias;
  }
  for (int arm = 0; arm < 2; ++arm) {
    auto& g = grad.head(arm);
    const auto& p = net_.params().head(arm);
    for (std::size_t l = 0; l < g.size(); ++l)
      g[l].weight += 2.0 * cfg_.weight_decay_lambda * p[l].weight;
  }

  ++t_;
  const auto& a = cfg_.adam;
  const double bias1 = 1.0 - std::pow(a.beta1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(a.beta2, static_cast<double>(t_));
  auto params = net_.params().tensors();
  auto grads = grad.tensors();
  auto first = m_.tensors();
  auto second = v_.tensors();
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].values;
    auto g = grads[k].values;
    auto mk = first[k].values;
    auto vk = second[k].values;
    for (std::size_t i = 0; i < p.size(); ++i) {
      mk[i] = a.beta1 * mk[i] + (1.0 - a.beta1) * g[i];
      vk[i] = a.beta2 * vk[i] + (1.0 - a.beta2) * g[i] * g[i];
      const double m_hat = mk[i] / bias1;
      const double v_hat = vk[i] / bias2;
      p[i] -= a.step_size * m_hat / (std::sqrt(v_hat) + a.epsilon);
    }
  }
  if (!net_.params().all_finite())
    throw TrainingError("parameters became non-finite at step " + std::to_string(t_));
  return result;
}

ObjectiveTerms Trainer::objective(const ObservationalDataset& ds) const {
  ObjectiveTerms terms;
  const GroupWeights gw = group_weights(ds.treatment);
  const Vector pred = nn::forward(net_, ds.covariates, ds.treatment);
  double loss = 0.0;
  for (Index i = 0; i < ds.size(); ++i)
    loss += gw.weights(i) * nn::sample_loss(pred(i), ds.outcome(i), cfg_.loss_kind);
  terms.factual_loss = loss / static_cast<double>(ds.size());
  if (cfg_.alpha > 0.0) {
    const Matrix rep = nn::representation(net_, ds.covariates);
    const PenaltyEvaluation pen = ipm_penalty(rep, ds.treatment, cfg_);
    terms.ipm_value = pen.ipm_value;
    terms.penalty = pen.penalty;
  }
  terms.weight_decay = cfg_.weight_decay_lambda * net_.params().head_weight_squared_norm();
  return terms;
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(nn::Network net, const ObservationalDataset& train_ds,
                  const ObservationalDataset& valid_ds, const TrainConfig& cfg) {
  cfg.validate();
  train_ds.validate();
  valid_ds.validate();
  const Index d = net.architecture().input_dim;
  if (train_ds.dim() != d || valid_ds.dim() != d)
    throw ArgumentError("train: dataset dimensionality does not match the network input");

  const GroupWeights gw = group_weights(train_ds.treatment);
  Trainer trainer(std::move(net), cfg);
  Rng rng(cfg.seed);

  TrainResult result;
  auto record = [&](int epoch) {
    const ObjectiveTerms tr = trainer.objective(train_ds);
    const ObjectiveTerms va = trainer.objective(valid_ds);
    EpochRecord rec{epoch,           tr.total(),        tr.factual_loss,       tr.ipm_value,
                    tr.penalty,      tr.weight_decay,   va.without_decay()};
    if (!std::isfinite(rec.train_objective) || !std::isfinite(rec.valid_objective))
      throw TrainingError("training objective diverged at epoch " + std::to_string(epoch));
    result.trace.epochs.push_back(rec);
    return rec.valid_objective;
  };

  double best = record(0);
  result.network = trainer.network();
  result.trace.best_epoch = 0;
  int since_best = 0;
  const Index n = train_ds.size();
  const Index bs = std::min(cfg.batch_size, n);
  const Index batches = std::max<Index>(1, (n + bs - 1) / bs);
  std::vector<double> weights;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (Index k = 0; k < batches; ++k) {
      const std::vector<Index> idx = sample_minibatch(rng, train_ds.treatment, bs);
      weights.resize(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r) weights[r] = gw.weights(idx[r]);
      try {
        trainer.step(train_ds, idx, weights);
      } catch (const NumericError& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ": " + e.what());
      } catch (const TrainingError& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ": " + e.what());
      }
    }
    const double valid = record(epoch);
    if (valid < best) {
      best = valid;
      result.network = trainer.network();
      result.trace.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      result.trace.stopping_reason = StopReason::early_stopping;
      break;
    }
  }
  result.trace.best_valid_objective = best;
  return result;
}

std::string TrainingTrace::to_csv() const {
  std::string out =
      "epoch,train_objective,factual_loss,ipm_value,ipm_penalty,weight_decay,valid_objective\n";
  char buf[256];
  for (const auto& r : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch,
                  r.train_objective, r.factual_loss, r.ipm_value, r.ipm_penalty, r.weight_decay,
                  r.valid_objective);
    out += buf;
  }
  return out;
}

void TrainingTrace::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_csv();
}

}  // namespace cfr::train
