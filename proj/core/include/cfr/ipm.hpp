#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "cfr/types.hpp"

namespace cfr::ipm {

// A point set is an m x k matrix: one sample of the representation per row.
// Throughout this module `a` is the control group and `b` the treated group
// when called from training, but every distance is symmetric.
using PointSet = Matrix;

enum class IpmKind { linear_mmd, rbf_mmd, sinkhorn_wasserstein };

struct IpmConfig {
  IpmKind kind = IpmKind::sinkhorn_wasserstein;
  // Gaussian kernel bandwidth sigma in exp(-|x-y|^2 / (2 sigma^2)); nullopt
  // selects the median pairwise distance of the pooled points on each call.
  std::optional<double> rbf_bandwidth;
  // Entropic strength: K_ij = exp(-lambda * M_ij).
  double sinkhorn_lambda = 10.0;
  int sinkhorn_iterations = 10;
  double sinkhorn_tolerance = 1e-6;
  // Switch to log-domain scaling when a kernel row sum drops below 1e-300.
  // When disabled such underflow is reported as a NumericError instead.
  bool log_domain_fallback = true;

  void validate() const;
};

std::string to_string(IpmKind kind);
IpmKind ipm_kind_from_string(const std::string& name);

/// 2 * || mean(a) - mean(b) ||_2.
double linear_mmd(const PointSet& a, const PointSet& b);

/// Unbiased squared-MMD estimate with a Gaussian kernel: both within-group
/// averages exclude the diagonal, the cross average enters with weight -2.
/// Needs at least two points per group.
double rbf_mmd(const PointSet& a, const PointSet& b, const IpmConfig& cfg);

/// Median pairwise Euclidean distance of the pooled rows of a and b.
double median_heuristic_bandwidth(const PointSet& a, const PointSet& b);

enum class SinkhornStop { converged, iteration_cap };

struct TransportPlan {
  Matrix plan;
  Vector row_marginal;
  Vector col_marginal;
  /// max over rows and columns of |plan sum - target marginal|.
  double marginal_violation = 0.0;
};

struct SinkhornResult {
  double distance = 0.0;
  TransportPlan transport;
  Matrix cost;
  int iterations = 0;
  SinkhornStop stop = SinkhornStop::iteration_cap;
  bool log_domain = false;
};

/// Entropically regularized transport with uniform marginals on the Euclidean
/// distance matrix; returns <T*, M>.
SinkhornResult sinkhorn(const PointSet& a, const PointSet& b, const IpmConfig& cfg);

inline double sinkhorn_distance(const PointSet& a, const PointSet& b, const IpmConfig& cfg) {
  return sinkhorn(a, b, cfg).distance;
}

/// Pairwise Euclidean distances M_ij = |a_i - b_j|.
Matrix pairwise_distances(const PointSet& a, const PointSet& b);

struct IpmGradient {
  Matrix grad_a;
  Matrix grad_b;
  // Set when the gradient is undefined (linear MMD with coincident means);
  // both matrices are then zero.
  bool degenerate = false;
};

/// Value of the configured IPM.
double ipm_value(const PointSet& a, const PointSet& b, const IpmConfig& cfg);

/// Gradient of the configured IPM with respect to every coordinate of both
/// sets. For Sinkhorn the transport plan is held fixed at its value for the
/// current points. The RBF bandwidth, when chosen by the median heuristic, is
/// likewise treated as a constant.
IpmGradient ipm_gradient(const PointSet& a, const PointSet& b, const IpmConfig& cfg);

struct IpmEvaluation {
  double value = 0.0;
  IpmGradient gradient;
};

IpmEvaluation ipm_value_and_gradient(const PointSet& a, const PointSet& b, const IpmConfig& cfg);

/// Number of IPM evaluations (value or gradient) performed by this process.
std::uint64_t evaluation_count();

}  // namespace cfr::ipm
