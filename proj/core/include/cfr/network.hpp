#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfr/types.hpp"

namespace cfr::nn {

enum class RepNormalization { unit_l2_projection, none };

// `identity` exists for tests and diagnostics that need an exactly linear
// representation; trained models use ELU.
enum class Activation { elu, identity };

struct NetworkArchitecture {
  Index input_dim = 0;
  std::vector<Index> rep_layers{200, 200, 200};
  std::vector<Index> head_layers{100, 100, 100};
  RepNormalization rep_normalization = RepNormalization::unit_l2_projection;
  OutcomeKind outcome_kind = OutcomeKind::continuous;
  Activation rep_activation = Activation::elu;

  Index rep_dim() const { return rep_layers.back(); }
  void validate() const;
};

/// y = x W + b for a batch x with one sample per row.
struct DenseLayer {
  Matrix weight;  // fan_in x fan_out
  Vector bias;    // fan_out
};

enum class Part { representation, head0, head1 };

/// Parameter tensors of a network (or gradients of the same shape).
/// Each head ends with a width-1 linear output layer.
struct ParameterSet {
  std::vector<DenseLayer> rep;
  std::vector<DenseLayer> head0;
  std::vector<DenseLayer> head1;

  std::vector<DenseLayer>& head(int t) { return t == 1 ? head1 : head0; }
  const std::vector<DenseLayer>& head(int t) const { return t == 1 ? head1 : head0; }

  ParameterSet zeros_like() const;

  struct Tensor {
    std::span<double> values;
    Part part;
    bool is_bias;
  };
  /// Flat views over every weight and bias, in serialization order:
  /// representation layers, head0, head1.
  std::vector<Tensor> tensors();
  std::vector<std::span<const double>> tensors() const;

  Index parameter_count() const;
  /// Sum of squared head weight-matrix entries (biases excluded).
  double head_weight_squared_norm() const;

  bool all_finite() const;
  bool operator==(const ParameterSet& other) const;
};

using Gradients = ParameterSet;

class Network {
 public:
  Network() = default;
  Network(NetworkArchitecture arch, ParameterSet params);

  /// Weights ~ Normal(0, 1/sqrt(fan_in)), biases zero.
  static Network init(const NetworkArchitecture& arch, std::uint64_t seed);

  const NetworkArchitecture& architecture() const { return arch_; }
  const ParameterSet& params() const { return params_; }
  ParameterSet& params() { return params_; }

  bool operator==(const Network& other) const;

 private:
  NetworkArchitecture arch_;
  ParameterSet params_;
};

double elu(double z);

struct Representation {
  Matrix values;
  // Rows whose pre-projection vector was exactly zero and therefore left
  // unscaled by the unit-norm projection.
  std::vector<Index> unprojected_rows;
};

/// Forward through the representation layers, then the unit-norm projection
/// when enabled. Throws NumericError naming the first non-finite layer.
Representation represent(const Network& net, const Matrix& x);
Matrix representation(const Network& net, const Matrix& x);

/// Representation layers only, before any projection.
Matrix representation_pre_projection(const Network& net, const Matrix& x);

/// Head t evaluated on given representation rows.
Vector head_output(const Network& net, const Matrix& rep, int t);

/// Prediction for each row through the head matching its treatment.
Vector forward(const Network& net, const Matrix& x, const IntVector& t);

/// Both potential-outcome predictions for every row.
struct PotentialOutcomes {
  Vector y0;
  Vector y1;
};
PotentialOutcomes predict_potential_outcomes(const Network& net, const Matrix& x);

struct BackwardResult {
  /// Weighted factual loss (1/m) sum_i w_i L(pred_i, y_i).
  double loss = 0.0;
  /// Loss gradients: rep part and both head parts.
  Gradients loss_grad;
  /// Upstream representation gradient chained through the representation
  /// layers; head parts are zero. All-zero when no upstream was supplied.
  Gradients upstream_grad;
};

/// Exact reverse-mode gradients for one batch. `upstream_rep_grad`, when
/// given, is d(objective)/d(representation) with the same shape as the
/// (projected) representation of x. Log-loss clamps predictions to
/// [1e-12, 1 - 1e-12]; the gradient is zero where the clamp is active.
BackwardResult backward(const Network& net, const Matrix& x, const IntVector& t, const Vector& y,
                        const Vector& sample_weights, LossKind loss_kind,
                        const std::optional<Matrix>& upstream_rep_grad = std::nullopt);

/// Per-sample loss value; `prediction` already squashed for binary outcomes.
double sample_loss(double prediction, double y, LossKind kind);

// Text serialization: a versioned header followed by every matrix and bias in
// the order rep layers, head0, head1; values use 17 significant digits so a
// save/load cycle is bit-exact.
std::string to_text(const Network& net);
Network from_text(const std::string& text);
void save(const Network& net, const std::filesystem::path& path);
Network load(const std::filesystem::path& path);

std::string to_string(RepNormalization n);
RepNormalization rep_normalization_from_string(const std::string& s);

}  // namespace cfr::nn
