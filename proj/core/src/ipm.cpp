#include "cfr/ipm.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <vector>

#include "cfr/error.hpp"

namespace cfr::ipm {
namespace {

std::atomic<std::uint64_t> g_evaluations{0};

void count_evaluation() { g_evaluations.fetch_add(1, std::memory_order_relaxed); }

void check_pair(const PointSet& a, const PointSet& b, const char* op) {
  if (a.rows() < 1 || b.rows() < 1)
    throw ArgumentError(std::string(op) + ": point sets must be nonempty");
  if (a.cols() != b.cols())
    throw ArgumentError(std::string(op) + ": dimension mismatch (" + std::to_string(a.cols()) +
                        " vs " + std::to_string(b.cols()) + ")");
  if (!a.allFinite() || !b.allFinite())
    throw NumericError(std::string(op) + ": non-finite point coordinates");
}

double resolve_bandwidth(const PointSet& a, const PointSet& b, const IpmConfig& cfg) {
  if (cfg.rbf_bandwidth) {
    if (!(*cfg.rbf_bandwidth > 0.0)) throw ArgumentError("rbf_mmd: bandwidth must be positive");
    return *cfg.rbf_bandwidth;
  }
  const double h = median_heuristic_bandwidth(a, b);
  // All pooled points coincide; any bandwidth gives the same kernel values.
  return h > 0.0 ? h : 1.0;
}

// Squared Euclidean distances between rows, evaluated pair by pair on
// contiguous columns so that coincident points give exactly zero.
Matrix squared_distances(const PointSet& a, const PointSet& b) {
  const Matrix at = a.transpose();
  const Matrix bt = b.transpose();
  Matrix d(a.rows(), b.rows());
  for (Index j = 0; j < b.rows(); ++j)
    for (Index i = 0; i < a.rows(); ++i) d(i, j) = (at.col(i) - bt.col(j)).squaredNorm();
  return d;
}

Matrix gaussian_kernel(const PointSet& a, const PointSet& b, double bandwidth) {
  return (squared_distances(a, b).array() * (-1.0 / (2.0 * bandwidth * bandwidth))).exp();
}

// sum_j w_ij (x_i - y_j) for every i, as a matrix.
Matrix weighted_differences(const Matrix& w, const PointSet& x, const PointSet& y) {
  return w.rowwise().sum().asDiagonal() * x - w * y;
}

double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((v.array() - top).exp().sum());
}

struct ScalingOutcome {
  Matrix plan;
  int iterations = 0;
  bool converged = false;
};

double marginal_error(const Matrix& plan, const Vector& r, const Vector& c) {
  const double rows = (plan.rowwise().sum() - r).cwiseAbs().maxCoeff();
  const double cols = (plan.colwise().sum().transpose() - c).cwiseAbs().maxCoeff();
  return std::max(rows, cols);
}

ScalingOutcome scale_plain(const Matrix& kernel, const Vector& r, const Vector& c,
                           const IpmConfig& cfg) {
  ScalingOutcome out;
  Vector u = Vector::Ones(r.size());
  Vector v = Vector::Ones(c.size());
  for (int it = 1; it <= cfg.sinkhorn_iterations; ++it) {
    u = r.cwiseQuotient(kernel * v);
    v = c.cwiseQuotient(kernel.transpose() * u);
    out.iterations = it;
    if (!u.allFinite() || !v.allFinite())
      throw NumericError("sinkhorn: non-finite scaling vector at iteration " + std::to_string(it));
    // Column sums are exact after the v update; only rows can be off.
    const double row_err = (u.cwiseProduct(kernel * v) - r).cwiseAbs().maxCoeff();
    if (row_err < cfg.sinkhorn_tolerance) {
      out.converged = true;
      break;
    }
  }
  out.plan = u.asDiagonal() * kernel * v.asDiagonal();
  return out;
}

ScalingOutcome scale_log(const Matrix& cost, const Vector& r, const Vector& c,
                         const IpmConfig& cfg) {
  ScalingOutcome out;
  const double lambda = cfg.sinkhorn_lambda;
  const Matrix log_kernel = -lambda * cost;
  const Vector log_r = r.array().log();
  const Vector log_c = c.array().log();
  Vector f = Vector::Zero(r.size());
  Vector g = Vector::Zero(c.size());
  auto plan_from = [&]() {
    Matrix p = log_kernel;
    p.colwise() += f;
    p.rowwise() += g.transpose();
    return Matrix(p.array().exp());
  };
  for (int it = 1; it <= cfg.sinkhorn_iterations; ++it) {
    for (Index i = 0; i < f.size(); ++i)
      f(i) = log_r(i) - log_sum_exp((log_kernel.row(i).transpose() + g));
    for (Index j = 0; j < g.size(); ++j)
      g(j) = log_c(j) - log_sum_exp((log_kernel.col(j) + f));
    out.iterations = it;
    if (!f.allFinite() || !g.allFinite())
      throw NumericError("sinkhorn: non-finite log-domain potential at iteration " +
                         std::to_string(it));
    const Matrix p = plan_from();
    const double row_err = (p.rowwise().sum() - r).cwiseAbs().maxCoeff();
    if (row_err < cfg.sinkhorn_tolerance) {
      out.converged = true;
      break;
    }
  }
  out.plan = plan_from();
  return out;
}

}  // namespace

void IpmConfig::validate() const {
  if (rbf_bandwidth && !(*rbf_bandwidth > 0.0)) throw ConfigError("rbf_bandwidth must be positive");
  if (!(sinkhorn_lambda > 0.0) || !std::isfinite(sinkhorn_lambda))
    throw ConfigError("sinkhorn_lambda must be positive");
  if (sinkhorn_iterations < 1) throw ConfigError("sinkhorn_iterations must be at least 1");
  if (!(sinkhorn_tolerance > 0.0)) throw ConfigError("sinkhorn_tolerance must be positive");
}

std::string to_string(IpmKind kind) {
  switch (kind) {
    case IpmKind::linear_mmd: return "linear_mmd";
    case IpmKind::rbf_mmd: return "rbf_mmd";
    case IpmKind::sinkhorn_wasserstein: return "sinkhorn_wasserstein";
  }
  return "unknown";
}

IpmKind ipm_kind_from_string(const std::string& name) {
  if (name == "linear_mmd" || name == "mmd_lin") return IpmKind::linear_mmd;
  if (name == "rbf_mmd" || name == "mmd_rbf") return IpmKind::rbf_mmd;
  if (name == "sinkhorn_wasserstein" || name == "wasserstein" || name == "wass")
    return IpmKind::sinkhorn_wasserstein;
  throw ConfigError("unknown IPM kind '" + name + "'");
}

std::uint64_t evaluation_count() { return g_evaluations.load(std::memory_order_relaxed); }

double linear_mmd(const PointSet& a, const PointSet& b) {
  check_pair(a, b, "linear_mmd");
  count_evaluation();
  const Vector diff = a.colwise().mean() - b.colwise().mean();
  return 2.0 * diff.norm();
}

double median_heuristic_bandwidth(const PointSet& a, const PointSet& b) {
  check_pair(a, b, "median_heuristic_bandwidth");
  Matrix pooled(a.rows() + b.rows(), a.cols());
  pooled << a, b;
  const Index n = pooled.rows();
  const Matrix sq = squared_distances(pooled, pooled);
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < j; ++i) dists.push_back(std::sqrt(sq(i, j)));
  if (dists.empty()) return 0.0;
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  const double upper = dists[mid];
  if (dists.size() % 2 == 1) return upper;
  const double lower = *std::max_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double rbf_mmd(const PointSet& a, const PointSet& b, const IpmConfig& cfg) {
  check_pair(a, b, "rbf_mmd");
  if (a.rows() < 2 || b.rows() < 2)
    throw ArgumentError("rbf_mmd: each group needs at least 2 points");
  count_evaluation();
  const double h = resolve_bandwidth(a, b, cfg);
  const double md = static_cast<double>(a.rows());
  const double mpd = static_cast<double>(b.rows());
  const double within_a = gaussian_kernel(a, a, h).sum() - md;  // diagonal entries are exactly 1
  const double within_b = gaussian_kernel(b, b, h).sum() - mpd;
  const double cross = gaussian_kernel(a, b, h).sum();
  return within_a / (md * (md - 1.0)) - 2.0 * cross / (md * mpd) + within_b / (mpd * (mpd - 1.0));
}

Matrix pairwise_distances(const PointSet& a, const PointSet& b) {
  return squared_distances(a, b).cwiseSqrt();
}

SinkhornResult sinkhorn(const PointSet& a, const PointSet& b, const IpmConfig& cfg) {
  check_pair(a, b, "sinkhorn_distance");
  cfg.validate();
  count_evaluation();
  const Index m = a.rows();
  const Index mp = b.rows();
  SinkhornResult result;
  result.cost = pairwise_distances(a, b);
  const Vector r = Vector::Constant(m, 1.0 / static_cast<double>(m));
  const Vector c = Vector::Constant(mp, 1.0 / static_cast<double>(mp));

  const Matrix kernel = (-cfg.sinkhorn_lambda * result.cost).array().exp();
  const double min_row = kernel.rowwise().sum().minCoeff();
  const double min_col = kernel.colwise().sum().minCoeff();
  ScalingOutcome scaled;
  if (min_row < 1e-300 || min_col < 1e-300) {
    if (!cfg.log_domain_fallback) {
      throw NumericError(
          "sinkhorn: kernel matrix underflows (a row or column of exp(-lambda*M) is ~0); "
          "use a smaller sinkhorn_lambda or rescale the inputs");
    }
    scaled = scale_log(result.cost, r, c, cfg);
    result.log_domain = true;
  } else {
    scaled = scale_plain(kernel, r, c, cfg);
  }
  if (!scaled.plan.allFinite()) throw NumericError("sinkhorn: non-finite transport plan");
  result.iterations = scaled.iterations;
  result.stop = scaled.converged ? SinkhornStop::converged : SinkhornStop::iteration_cap;
  result.transport.plan = std::move(scaled.plan);
  result.transport.row_marginal = r;
  result.transport.col_marginal = c;
  result.transport.marginal_violation = marginal_error(result.transport.plan, r, c);
  result.distance = result.transport.plan.cwiseProduct(result.cost).sum();
  return result;
}

namespace {

IpmGradient linear_mmd_gradient(const PointSet& a, const PointSet& b) {
  IpmGradient g;
  g.grad_a = Matrix::Zero(a.rows(), a.cols());
  g.grad_b = Matrix::Zero(b.rows(), b.cols());
  const Vector diff = a.colwise().mean() - b.colwise().mean();
  const double norm = diff.norm();
  if (norm == 0.0) {
    g.degenerate = true;
    return g;
  }
  const Vector unit = diff / norm;
  g.grad_a.rowwise() = (2.0 / static_cast<double>(a.rows())) * unit.transpose();
  g.grad_b.rowwise() = (-2.0 / static_cast<double>(b.rows())) * unit.transpose();
  return g;
}

IpmGradient rbf_mmd_gradient(const PointSet& a, const PointSet& b, const IpmConfig& cfg) {
  if (a.rows() < 2 || b.rows() < 2)
    throw ArgumentError("rbf_mmd: each group needs at least 2 points");
  const double h = resolve_bandwidth(a, b, cfg);
  const double inv_h2 = 1.0 / (h * h);
  const double md = static_cast<double>(a.rows());
  const double mpd = static_cast<double>(b.rows());
  const double wa = 2.0 / (md * (md - 1.0));
  const double wb = 2.0 / (mpd * (mpd - 1.0));
  const double wc = -2.0 / (md * mpd);
  // d/dx exp(-|x-y|^2/(2h^2)) = -k(x,y) (x-y)/h^2
  Matrix kaa = gaussian_kernel(a, a, h);
  Matrix kbb = gaussian_kernel(b, b, h);
  const Matrix kab = gaussian_kernel(a, b, h);
  kaa.diagonal().setZero();
  kbb.diagonal().setZero();
  IpmGradient g;
  g.grad_a = -inv_h2 * (wa * weighted_differences(kaa, a, a) + wc * weighted_differences(kab, a, b));
  g.grad_b = -inv_h2 * (wb * weighted_differences(kbb, b, b) + wc * weighted_differences(kab.transpose(), b, a));
  return g;
}

IpmGradient sinkhorn_gradient(const PointSet& a, const PointSet& b, const Matrix& plan,
                              const Matrix& cost) {
  // d|a_i - b_j| / da_i = (a_i - b_j) / |a_i - b_j|; coincident pairs contribute nothing.
  const Matrix w = (cost.array() > 0.0).select(plan.array() / cost.array(), 0.0);
  IpmGradient g;
  g.grad_a = weighted_differences(w, a, b);
  g.grad_b = weighted_differences(w.transpose(), b, a);
  return g;
}

}  // namespace

double ipm_value(const PointSet& a, const PointSet& b, const IpmConfig& cfg) {
  switch (cfg.kind) {
    case IpmKind::linear_mmd: return linear_mmd(a, b);
    case IpmKind::rbf_mmd: return rbf_mmd(a, b, cfg);
    case IpmKind::sinkhorn_wasserstein: return sinkhorn(a, b, cfg).distance;
  }
  throw ArgumentError("unknown IPM kind");
}

IpmEvaluation ipm_value_and_gradient(const PointSet& a, const PointSet& b, const IpmConfig& cfg) {
  IpmEvaluation out;
  switch (cfg.kind) {
    case IpmKind::linear_mmd:
      out.value = linear_mmd(a, b);
      out.gradient = linear_mmd_gradient(a, b);
      break;
    case IpmKind::rbf_mmd:
      out.value = rbf_mmd(a, b, cfg);
      out.gradient = rbf_mmd_gradient(a, b, cfg);
      break;
    case IpmKind::sinkhorn_wasserstein: {
      const SinkhornResult s = sinkhorn(a, b, cfg);
      out.value = s.distance;
      out.gradient = sinkhorn_gradient(a, b, s.transport.plan, s.cost);
      break;
    }
  }
  return out;
}

IpmGradient ipm_gradient(const PointSet& a, const PointSet& b, const IpmConfig& cfg) {
  return ipm_value_and_gradient(a, b, cfg).gradient;
}

}  // namespace cfr::ipm
