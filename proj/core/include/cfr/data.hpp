#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfr/types.hpp"

namespace cfr {

class ConfigFile;

/// Noiseless potential-outcome means for each unit. The true effect is
/// always derived as mu1 - mu0; it is never stored.
struct GroundTruth {
  Vector mu0;
  Vector mu1;
  double noise_std0 = 0.0;
  double noise_std1 = 0.0;
  // False for data loaded from disk, where the outcome noise level is unknown.
  bool noise_known = false;

  Vector tau() const { return mu1 - mu0; }
};

/// Units (x, t, y) with optional ground truth and randomized-subset flags.
struct ObservationalDataset {
  Matrix covariates;
  IntVector treatment;
  Vector outcome;
  OutcomeKind outcome_kind = OutcomeKind::continuous;
  std::optional<GroundTruth> ground_truth;
  std::optional<IntVector> randomized_flag;

  Index size() const { return covariates.rows(); }
  Index dim() const { return covariates.cols(); }
  Index treated_count() const;
  Index control_count() const { return size() - treated_count(); }
  /// Marginal treated fraction u.
  double treated_fraction() const;

  std::vector<Index> treated_indices() const;
  std::vector<Index> control_indices() const;

  /// Rows in the given order; ground truth and flags travel with them.
  /// Does not validate (a subset may legitimately hold a single arm).
  ObservationalDataset rows(std::span<const Index> idx) const;

  /// Throws ArgumentError naming the first violated invariant.
  void validate() const;
};

/// Row-wise concatenation; both parts must agree on dimension, outcome kind
/// and which optional columns are present.
ObservationalDataset concat(const ObservationalDataset& a, const ObservationalDataset& b);

enum class ResponseSurface { linear, exponential_nonlinear };

struct SyntheticConfig {
  Index n_units = 747;
  Index n_treated_target = 139;
  Index dim = 25;
  ResponseSurface response_surface = ResponseSurface::exponential_nonlinear;
  double confounding_strength = 1.0;
  double outcome_noise_std = 1.0;

  void validate() const;
  static SyntheticConfig from_config(const ConfigFile& cfg, const std::string& section);
};

/// Semi-synthetic benchmark with confounded assignment and known noiseless
/// outcomes. Treatment follows a logistic propensity over the covariates whose
/// intercept is calibrated so that the treated count lands within 10% of the
/// target; the draw is repeated (bounded) until it does.
ObservationalDataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed);

/// Logistic propensity fitted inside induce_imbalance, exposed for inspection.
Vector fit_propensity(const ObservationalDataset& ds);

/// Control rows removed by induce_imbalance, in removal order.
std::vector<Index> imbalance_removals(const ObservationalDataset& ds, double q,
                                      Index n_remove, std::uint64_t seed);

/// Repeatedly removes a control unit: with probability q the remaining one
/// with the largest fitted propensity, otherwise a uniformly random one.
ObservationalDataset induce_imbalance(const ObservationalDataset& ds, double q,
                                      Index n_remove, std::uint64_t seed);

struct SplitRatios {
  double train = 0.63;
  double valid = 0.27;
  double test = 0.10;

  void validate() const;
};

struct DatasetSplit {
  ObservationalDataset train;
  ObservationalDataset valid;
  ObservationalDataset test;
  std::vector<Index> train_index;
  std::vector<Index> valid_index;
  std::vector<Index> test_index;
};

/// Part sizes for n rows; fractional remainders go to train, then valid.
std::array<Index, 3> split_sizes(Index n, const SplitRatios& ratios);

DatasetSplit split(const ObservationalDataset& ds, const SplitRatios& ratios,
                   std::uint64_t seed);

/// Column mapping for CSV ingestion. An empty covariate list means "every
/// column that is not one of the named special columns".
struct CsvSchema {
  std::vector<std::string> covariate_columns;
  std::string treatment_column = "t";
  std::string outcome_column = "y";
  std::string mu0_column = "mu0";
  std::string mu1_column = "mu1";
  std::string randomized_column = "e";
  OutcomeKind outcome_kind = OutcomeKind::continuous;
};

ObservationalDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
ObservationalDataset parse_csv(const std::string& text, const CsvSchema& schema = {});

/// Writes x1..xd,t,y[,mu0,mu1][,e] with 17 significant digits.
void write_csv(const ObservationalDataset& ds, const std::filesystem::path& path);
std::string to_csv(const ObservationalDataset& ds);

}  // namespace cfr
