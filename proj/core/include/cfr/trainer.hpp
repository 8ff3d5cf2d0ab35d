#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cfr/data.hpp"
#include "cfr/ipm.hpp"
#include "cfr/network.hpp"

namespace cfr::train {

struct AdamConfig {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double alpha = 1.0;                 // IPM weight; 0 gives TARNet
  double weight_decay_lambda = 1e-4;  // on head weight matrices only
  Index batch_size = 100;
  int max_epochs = 200;
  int early_stop_patience = 30;
  LossKind loss_kind = LossKind::squared;
  ipm::IpmConfig ipm;
  // Penalize (2 |mean diff|)^2 rather than 2 |mean diff| for linear MMD.
  bool square_linear_mmd = true;
  AdamConfig adam;
  std::uint64_t seed = 1;

  void validate() const;
};

/// w_i = t_i / (2u) + (1 - t_i) / (2(1 - u)) with u the treated fraction.
struct GroupWeights {
  Vector weights;
  double u = 0.0;
};
GroupWeights group_weights(const IntVector& t);

/// Stratified minibatch: the treated share tracks u to within one unit, with
/// at least one unit from each arm whenever both exist. Each arm is sampled
/// uniformly without replacement.
std::vector<Index> sample_minibatch(Rng& rng, const IntVector& t, Index batch_size);

/// Terms of the training objective on a full dataset.
struct ObjectiveTerms {
  double factual_loss = 0.0;   // (1/n) sum_i w_i L(f(x_i, t_i), y_i)
  double ipm_value = 0.0;      // IPM between control and treated representations
  double penalty = 0.0;        // alpha * ipm (after optional squaring)
  double weight_decay = 0.0;   // lambda * |head weights|^2

  double total() const { return factual_loss + penalty + weight_decay; }
  double without_decay() const { return factual_loss + penalty; }
};

struct EpochRecord {
  int epoch = 0;
  double train_objective = 0.0;
  double factual_loss = 0.0;
  double ipm_value = 0.0;
  double ipm_penalty = 0.0;
  double weight_decay = 0.0;
  double valid_objective = 0.0;
};

enum class StopReason { max_epochs, early_stopping };

struct TrainingTrace {
  std::vector<EpochRecord> epochs;  // epoch 0 is the initial network
  StopReason stopping_reason = StopReason::max_epochs;
  int best_epoch = 0;
  double best_valid_objective = 0.0;

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

struct StepResult {
  double batch_loss = 0.0;
  double batch_ipm = 0.0;
};

/// One optimizer state bound to one network. Not thread-safe; each training
/// run owns its Trainer.
class Trainer {
 public:
  Trainer(nn::Network net, TrainConfig cfg);

  /// One Adam update on the given rows with explicit per-row sample weights:
  /// representation <- W - eta (alpha g1 + g3), heads <- V - eta (g2 + 2 lambda V).
  StepResult step(const ObservationalDataset& ds, std::span<const Index> batch,
                  std::span<const double> sample_weights);

  /// Objective terms on a whole dataset, weights from that dataset's own u.
  ObjectiveTerms objective(const ObservationalDataset& ds) const;

  const nn::Network& network() const { return net_; }
  const TrainConfig& config() const { return cfg_; }
  long steps_taken() const { return t_; }

 private:
  nn::Network net_;
  TrainConfig cfg_;
  nn::ParameterSet m_;
  nn::ParameterSet v_;
  long t_ = 0;
};

/// IPM penalty (alpha already applied) and its gradient with respect to each
/// representation row, for representations `rep` split by `t`.
struct PenaltyEvaluation {
  double ipm_value = 0.0;
  double penalty = 0.0;
  Matrix rep_grad;
};
PenaltyEvaluation ipm_penalty(const Matrix& rep, const IntVector& t, const TrainConfig& cfg);

struct TrainResult {
  nn::Network network;  // snapshot with the best validation objective
  TrainingTrace trace;
};

/// Minibatch Adam on the weighted factual loss + alpha * IPM + weight decay,
/// with early stopping on the validation objective (without weight decay).
/// Throws TrainingError if the objective becomes non-finite.
TrainResult train(nn::Network net, const ObservationalDataset& train_ds,
                  const ObservationalDataset& valid_ds, const TrainConfig& cfg);

}  // namespace cfr::train
