#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace cfr {

// Row-per-sample layout throughout: an n x d matrix holds n points in R^d.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;
using Index = Eigen::Index;

using Rng = std::mt19937_64;

enum class OutcomeKind { continuous, binary };
enum class LossKind { squared, log_loss };

/// SplitMix64 finalizer; used to derive independent per-trial / per-realization
/// seeds from a base seed.
constexpr std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace cfr
