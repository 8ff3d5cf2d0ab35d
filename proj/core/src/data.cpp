#include "cfr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "cfr/config_file.hpp"
#include "cfr/error.hpp"
#include "cfr/logistic.hpp"

namespace cfr {

// ---------------------------------------------------------------------------
// ObservationalDataset

Index ObservationalDataset::treated_count() const {
  return treatment.size() == 0 ? 0 : static_cast<Index>(treatment.sum());
}

double ObservationalDataset::treated_fraction() const {
  if (size() == 0) return 0.0;
  return static_cast<double>(treated_count()) / static_cast<double>(size());
}

std::vector<Index> ObservationalDataset::treated_indices() const {
  std::vector<Index> out;
  for (Index i = 0; i < treatment.size(); ++i)
    if (treatment(i) == 1) out.push_back(i);
  return out;
}

std::vector<Index> ObservationalDataset::control_indices() const {
  std::vector<Index> out;
  for (Index i = 0; i < treatment.size(); ++i)
    if (treatment(i) == 0) out.push_back(i);
  return out;
}

ObservationalDataset ObservationalDataset::rows(std::span<const Index> idx) const {
  const Index m = static_cast<Index>(idx.size());
  ObservationalDataset out;
  out.outcome_kind = outcome_kind;
  out.covariates.resize(m, dim());
  out.treatment.resize(m);
  out.outcome.resize(m);
  if (ground_truth) {
    out.ground_truth = GroundTruth{Vector(m), Vector(m), ground_truth->noise_std0,
                                   ground_truth->noise_std1, ground_truth->noise_known};
  }
  if (randomized_flag) out.randomized_flag = IntVector(m);
  for (Index r = 0; r < m; ++r) {
    const Index i = idx[static_cast<std::size_t>(r)];
    if (i < 0 || i >= size()) throw ArgumentError("row index out of range");
    out.covariates.row(r) = covariates.row(i);
    out.treatment(r) = treatment(i);
    out.outcome(r) = outcome(i);
    if (ground_truth) {
      out.ground_truth->mu0(r) = ground_truth->mu0(i);
      out.ground_truth->mu1(r) = ground_truth->mu1(i);
    }
    if (randomized_flag) (*out.randomized_flag)(r) = (*randomized_flag)(i);
  }
  return out;
}

void ObservationalDataset::validate() const {
  const Index n = size();
  if (n < 2) throw ArgumentError("dataset needs at least 2 rows");
  if (dim() < 1) throw ArgumentError("dataset needs at least 1 covariate");
  if (treatment.size() != n || outcome.size() != n)
    throw ArgumentError("treatment/outcome length does not match covariate rows");
  for (Index i = 0; i < n; ++i)
    if (treatment(i) != 0 && treatment(i) != 1)
      throw ArgumentError("treatment value outside {0,1} at row " + std::to_string(i));
  const Index nt = treated_count();
  if (nt == 0 || nt == n) throw ArgumentError("dataset must contain both treated and control units");
  if (!covariates.allFinite()) throw ArgumentError("non-finite covariate");
  if (!outcome.allFinite()) throw ArgumentError("non-finite outcome");
  if (outcome_kind == OutcomeKind::binary) {
    for (Index i = 0; i < n; ++i)
      if (outcome(i) != 0.0 && outcome(i) != 1.0)
        throw ArgumentError("binary outcome outside {0,1} at row " + std::to_string(i));
  }
  if (ground_truth) {
    if (ground_truth->mu0.size() != n || ground_truth->mu1.size() != n)
      throw ArgumentError("ground truth length does not match dataset");
    if (!ground_truth->mu0.allFinite() || !ground_truth->mu1.allFinite())
      throw ArgumentError("non-finite ground truth");
    if (ground_truth->noise_std0 < 0.0 || ground_truth->noise_std1 < 0.0)
      throw ArgumentError("negative noise standard deviation");
  }
  if (randomized_flag) {
    if (randomized_flag->size() != n) throw ArgumentError("randomized flag length mismatch");
    for (Index i = 0; i < n; ++i)
      if ((*randomized_flag)(i) != 0 && (*randomized_flag)(i) != 1)
        throw ArgumentError("randomized flag outside {0,1}");
  }
}

ObservationalDataset concat(const ObservationalDataset& a, const ObservationalDataset& b) {
  if (a.dim() != b.dim()) throw ArgumentError("concat: dimension mismatch");
  if (a.outcome_kind != b.outcome_kind) throw ArgumentError("concat: outcome kind mismatch");
  if (a.ground_truth.has_value() != b.ground_truth.has_value() ||
      a.randomized_flag.has_value() != b.randomized_flag.has_value())
    throw ArgumentError("concat: optional columns differ");
  const Index na = a.size();
  const Index nb = b.size();
  ObservationalDataset out;
  out.outcome_kind = a.outcome_kind;
  out.covariates.resize(na + nb, a.dim());
  out.covariates << a.covariates, b.covariates;
  out.treatment.resize(na + nb);
  out.treatment << a.treatment, b.treatment;
  out.outcome.resize(na + nb);
  out.outcome << a.outcome, b.outcome;
  if (a.ground_truth) {
    GroundTruth gt = *a.ground_truth;
    gt.mu0.resize(na + nb);
    gt.mu0 << a.ground_truth->mu0, b.ground_truth->mu0;
    gt.mu1.resize(na + nb);
    gt.mu1 << a.ground_truth->mu1, b.ground_truth->mu1;
    out.ground_truth = std::move(gt);
  }
  if (a.randomized_flag) {
    IntVector e(na + nb);
    e << *a.randomized_flag, *b.randomized_flag;
    out.randomized_flag = std::move(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generation

void SyntheticConfig::validate() const {
  if (n_units < 2) throw ConfigError("n_units must be at least 2");
  if (dim < 1) throw ConfigError("dim must be at least 1");
  if (n_treated_target <= 0 || n_treated_target >= n_units)
    throw ConfigError("n_treated_target must satisfy 0 < n_treated_target < n_units");
  if (!(confounding_strength >= 0.0) || !std::isfinite(confounding_strength))
    throw ConfigError("confounding_strength must be a finite value >= 0");
  if (!(outcome_noise_std >= 0.0) || !std::isfinite(outcome_noise_std))
    throw ConfigError("outcome_noise_std must be a finite value >= 0");
}

SyntheticConfig SyntheticConfig::from_config(const ConfigFile& cfg, const std::string& section) {
  SyntheticConfig out;
  out.n_units = cfg.get_int(section, "n_units", out.n_units);
  out.n_treated_target = cfg.get_int(section, "n_treated", out.n_treated_target);
  out.dim = cfg.get_int(section, "dim", out.dim);
  const std::string surface = cfg.get_string(section, "response_surface", "exponential_nonlinear");
  if (surface == "linear") {
    out.response_surface = ResponseSurface::linear;
  } else if (surface == "exponential_nonlinear") {
    out.response_surface = ResponseSurface::exponential_nonlinear;
  } else {
    throw ConfigError(section + ".response_surface: unknown value '" + surface + "'");
  }
  out.confounding_strength = cfg.get_double(section, "confounding_strength", out.confounding_strength);
  out.outcome_noise_std = cfg.get_double(section, "noise_std", out.outcome_noise_std);
  out.validate();
  return out;
}

namespace {

constexpr int kAssignmentAttempts = 200;
constexpr double kMeanEffect = 4.0;

Matrix standard_normal(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

// Coefficients sampled from {0, .1, .2, .3, .4} with mass concentrated at 0,
// rescaled so the linear index variance does not grow with dim.
Vector sparse_coefficients(Index dim, Rng& rng) {
  static constexpr std::array<double, 5> values{0.0, 0.1, 0.2, 0.3, 0.4};
  std::discrete_distribution<int> pick({0.6, 0.1, 0.1, 0.1, 0.1});
  const double scale = std::sqrt(25.0 / static_cast<double>(dim));
  Vector beta(dim);
  for (Index j = 0; j < dim; ++j) beta(j) = values[static_cast<std::size_t>(pick(rng))] * scale;
  return beta;
}

// Intercept b with sum_i sigmoid(s_i + b) == target.
double calibrate_intercept(const Vector& score, double target) {
  double lo = -50.0;
  double hi = 50.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double expected = 0.0;
    for (Index i = 0; i < score.size(); ++i) expected += sigmoid(score(i) + mid);
    (expected < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

ObservationalDataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const Index n = cfg.n_units;
  const Index d = cfg.dim;

  ObservationalDataset ds;
  ds.outcome_kind = OutcomeKind::continuous;
  ds.covariates = standard_normal(n, d, rng);

  // Propensity direction: unit vector, so the confounding score has unit variance.
  Vector direction = standard_normal(d, 1, rng).col(0);
  direction /= direction.norm();
  const Vector score = cfg.confounding_strength * (ds.covariates * direction);

  // Outcomes load partly on the propensity direction so that assignment is
  // genuinely confounded with the response.
  Vector beta0 = sparse_coefficients(d, rng) + 0.5 * direction;
  Vector beta1 = sparse_coefficients(d, rng) + 0.5 * direction;

  Vector mu0(n);
  Vector mu1(n);
  if (cfg.response_surface == ResponseSurface::linear) {
    mu0 = ds.covariates * beta0;
    mu1 = ds.covariates * beta1;
    mu1.array() += kMeanEffect;
  } else {
    // mu1 = exp((x + 0.5) . beta1), mu0 linear; offset so the mean effect is kMeanEffect.
    beta1 *= 0.5;
    const Vector index1 = (ds.covariates.array() + 0.5).matrix() * beta1;
    mu1 = (index1.array() - index1.mean()).exp().matrix();
    mu0 = ds.covariates * beta0;
    mu0.array() += mu1.mean() - mu0.mean() - kMeanEffect;
  }

  const double intercept = calibrate_intercept(score, static_cast<double>(cfg.n_treated_target));
  const double tolerance = 0.1 * static_cast<double>(cfg.n_treated_target);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  bool accepted = false;
  ds.treatment.resize(n);
  for (int attempt = 0; attempt < kAssignmentAttempts && !accepted; ++attempt) {
    Index treated = 0;
    for (Index i = 0; i < n; ++i) {
      ds.treatment(i) = unif(rng) < sigmoid(score(i) + intercept) ? 1 : 0;
      treated += ds.treatment(i);
    }
    const double gap = std::abs(static_cast<double>(treated - cfg.n_treated_target));
    accepted = gap <= tolerance && treated > 0 && treated < n;
  }
  if (!accepted) {
    throw GenerationError("could not draw a treatment assignment with treated count within 10% of " +
                          std::to_string(cfg.n_treated_target) + " after " +
                          std::to_string(kAssignmentAttempts) + " attempts");
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  ds.outcome.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double mean = ds.treatment(i) == 1 ? mu1(i) : mu0(i);
    const double eps = noise(rng);
    ds.outcome(i) = cfg.outcome_noise_std > 0.0 ? mean + cfg.outcome_noise_std * eps : mean;
  }
  ds.ground_truth = GroundTruth{std::move(mu0), std::move(mu1), cfg.outcome_noise_std,
                                cfg.outcome_noise_std, true};
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Imbalance induction

Vector fit_propensity(const ObservationalDataset& ds) {
  const LogisticFit fit = fit_logistic(ds.covariates, ds.treatment.cast<double>(),
                                       LogisticOptions{500, 0.1});
  return fit.predict_proba(ds.covariates);
}

std::vector<Index> imbalance_removals(const ObservationalDataset& ds, double q, Index n_remove,
                                      std::uint64_t seed) {
  if (!(q >= 0.0 && q <= 1.0)) throw ArgumentError("imbalance q must lie in [0,1]");
  std::vector<Index> remaining = ds.control_indices();
  if (n_remove < 0 || n_remove >= static_cast<Index>(remaining.size())) {
    throw ArgumentError("n_remove (" + std::to_string(n_remove) +
                        ") must be smaller than the number of control units (" +
                        std::to_string(remaining.size()) + ")");
  }
  Vector propensity;
  if (q > 0.0) propensity = fit_propensity(ds);

  // Greedy order: largest propensity first, lowest index on ties.
  std::vector<Index> by_propensity = remaining;
  if (q > 0.0) {
    std::stable_sort(by_propensity.begin(), by_propensity.end(),
                     [&](Index a, Index b) { return propensity(a) > propensity(b); });
  }
  std::vector<char> removed(static_cast<std::size_t>(ds.size()), 0);
  std::size_t greedy_cursor = 0;

  Rng rng(seed);
  std::bernoulli_distribution use_propensity(q);
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(n_remove));
  for (Index step = 0; step < n_remove; ++step) {
    Index victim = -1;
    if (use_propensity(rng)) {
      while (removed[static_cast<std::size_t>(by_propensity[greedy_cursor])]) ++greedy_cursor;
      victim = by_propensity[greedy_cursor];
      remaining.erase(std::find(remaining.begin(), remaining.end(), victim));
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, remaining.size() - 1);
      const auto pos = pick(rng);
      victim = remaining[pos];
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pos));
    }
    removed[static_cast<std::size_t>(victim)] = 1;
    out.push_back(victim);
  }
  return out;
}

ObservationalDataset induce_imbalance(const ObservationalDataset& ds, double q, Index n_remove,
                                      std::uint64_t seed) {
  const std::vector<Index> removals = imbalance_removals(ds, q, n_remove, seed);
  std::vector<char> drop(static_cast<std::size_t>(ds.size()), 0);
  for (Index i : removals) drop[static_cast<std::size_t>(i)] = 1;
  std::vector<Index> keep;
  keep.reserve(static_cast<std::size_t>(ds.size() - n_remove));
  for (Index i = 0; i < ds.size(); ++i)
    if (!drop[static_cast<std::size_t>(i)]) keep.push_back(i);
  return ds.rows(keep);
}

// ---------------------------------------------------------------------------
// Splits

void SplitRatios::validate() const {
  for (double r : {train, valid, test})
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("split ratios must each lie in (0,1)");
  if (std::abs(train + valid + test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

std::array<Index, 3> split_sizes(Index n, const SplitRatios& ratios) {
  ratios.validate();
  std::array<Index, 3> sizes{};
  const std::array<double, 3> r{ratios.train, ratios.valid, ratios.test};
  Index assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    // The epsilon absorbs representation error such as 0.63 * 1000 = 629.999...
    sizes[k] = static_cast<Index>(std::floor(static_cast<double>(n) * r[k] + 1e-9));
    assigned += sizes[k];
  }
  for (std::size_t k = 0; assigned < n; k = (k + 1) % 2, ++assigned) ++sizes[k];
  return sizes;
}

DatasetSplit split(const ObservationalDataset& ds, const SplitRatios& ratios, std::uint64_t seed) {
  const auto sizes = split_sizes(ds.size(), ratios);
  std::vector<Index> perm(static_cast<std::size_t>(ds.size()));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  DatasetSplit out;
  auto first = perm.begin();
  out.train_index.assign(first, first + sizes[0]);
  first += sizes[0];
  out.valid_index.assign(first, first + sizes[1]);
  first += sizes[1];
  out.test_index.assign(first, perm.end());

  const std::array<const char*, 3> names{"train", "valid", "test"};
  const std::array<const std::vector<Index>*, 3> parts{&out.train_index, &out.valid_index,
                                                       &out.test_index};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& idx = *parts[k];
    if (idx.empty()) throw SplitError(std::string(names[k]) + " split would be empty");
    Index treated = 0;
    for (Index i : idx) treated += ds.treatment(i);
    if (treated == 0 || treated == static_cast<Index>(idx.size())) {
      throw SplitError(std::string(names[k]) + " split would contain a single treatment arm");
    }
  }
  out.train = ds.rows(out.train_index);
  out.valid = ds.rows(out.valid_index);
  out.test = ds.rows(out.test_index);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    const auto a = field.find_first_not_of(" \t\r");
    const auto b = field.find_last_not_of(" \t\r");
    fields.push_back(a == std::string::npos ? std::string{} : field.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_cell(const std::string& cell, const std::string& column, long line) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (cell.empty() || ec != std::errc{} || ptr != end || !std::isfinite(value)) {
    throw ParseError("column '" + column + "': non-numeric value '" + cell + "'", line);
  }
  return value;
}

int parse_binary(const std::string& cell, const std::string& column, long line) {
  const double v = parse_cell(cell, column, line);
  if (v != 0.0 && v != 1.0) {
    throw ParseError("column '" + column + "': value " + cell + " outside {0,1}", line);
  }
  return v == 1.0 ? 1 : 0;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ObservationalDataset parse_csv(const std::string& text, const CsvSchema& schema) {
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) throw ParseError("missing header row", 1);
  ++line_no;
  const std::vector<std::string> header = split_fields(line);
  std::map<std::string, std::size_t> column;
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k].empty()) throw ParseError("empty column name", line_no);
    if (!column.emplace(header[k], k).second)
      throw ParseError("duplicate column '" + header[k] + "'", line_no);
  }
  auto find = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = column.find(name);
    if (it == column.end()) return std::nullopt;
    return it->second;
  };
  const auto t_col = find(schema.treatment_column);
  const auto y_col = find(schema.outcome_column);
  if (!t_col) throw ParseError("missing required column '" + schema.treatment_column + "'", 1);
  if (!y_col) throw ParseError("missing required column '" + schema.outcome_column + "'", 1);
  const auto mu0_col = find(schema.mu0_column);
  const auto mu1_col = find(schema.mu1_column);
  if (mu0_col.has_value() != mu1_col.has_value())
    throw ParseError("ground truth needs both '" + schema.mu0_column + "' and '" +
                         schema.mu1_column + "'",
                     1);
  const auto e_col = find(schema.randomized_column);

  std::vector<std::size_t> x_cols;
  std::vector<std::string> x_names;
  if (schema.covariate_columns.empty()) {
    const std::array<std::string, 5> reserved{schema.treatment_column, schema.outcome_column,
                                              schema.mu0_column, schema.mu1_column,
                                              schema.randomized_column};
    for (std::size_t k = 0; k < header.size(); ++k) {
      if (std::find(reserved.begin(), reserved.end(), header[k]) == reserved.end()) {
        x_cols.push_back(k);
        x_names.push_back(header[k]);
      }
    }
  } else {
    for (const auto& name : schema.covariate_columns) {
      const auto c = find(name);
      if (!c) throw ParseError("missing required column '" + name + "'", 1);
      x_cols.push_back(*c);
      x_names.push_back(name);
    }
  }
  if (x_cols.empty()) throw ParseError("no covariate columns", 1);

  std::vector<std::vector<double>> x_rows;
  std::vector<int> t;
  std::vector<double> y;
  std::vector<double> mu0;
  std::vector<double> mu1;
  std::vector<int> e;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    std::vector<double> xr;
    xr.reserve(x_cols.size());
    for (std::size_t k = 0; k < x_cols.size(); ++k)
      xr.push_back(parse_cell(fields[x_cols[k]], x_names[k], line_no));
    x_rows.push_back(std::move(xr));
    t.push_back(parse_binary(fields[*t_col], schema.treatment_column, line_no));
    if (schema.outcome_kind == OutcomeKind::binary) {
      y.push_back(parse_binary(fields[*y_col], schema.outcome_column, line_no));
    } else {
      y.push_back(parse_cell(fields[*y_col], schema.outcome_column, line_no));
    }
    if (mu0_col) {
      mu0.push_back(parse_cell(fields[*mu0_col], schema.mu0_column, line_no));
      mu1.push_back(parse_cell(fields[*mu1_col], schema.mu1_column, line_no));
    }
    if (e_col) e.push_back(parse_binary(fields[*e_col], schema.randomized_column, line_no));
  }

  const Index n = static_cast<Index>(x_rows.size());
  const Index d = static_cast<Index>(x_cols.size());
  ObservationalDataset ds;
  ds.outcome_kind = schema.outcome_kind;
  ds.covariates.resize(n, d);
  ds.treatment.resize(n);
  ds.outcome.resize(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j)
      ds.covariates(i, j) = x_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    ds.treatment(i) = t[static_cast<std::size_t>(i)];
    ds.outcome(i) = y[static_cast<std::size_t>(i)];
  }
  if (mu0_col) {
    ds.ground_truth = GroundTruth{Eigen::Map<const Vector>(mu0.data(), n),
                                  Eigen::Map<const Vector>(mu1.data(), n), 0.0, 0.0, false};
  }
  if (e_col) ds.randomized_flag = Eigen::Map<const IntVector>(e.data(), n);
  try {
    ds.validate();
  } catch (const ArgumentError& err) {
    throw ParseError(err.what(), 0);
  }
  return ds;
}

ObservationalDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_csv(buf.str(), schema);
  } catch (const ParseError& err) {
    throw ParseError(path.string() + ": " + err.what(), err.line());
  }
}

std::string to_csv(const ObservationalDataset& ds) {
  std::string out;
  for (Index j = 0; j < ds.dim(); ++j) out += "x" + std::to_string(j + 1) + ",";
  out += "t,y";
  if (ds.ground_truth) out += ",mu0,mu1";
  if (ds.randomized_flag) out += ",e";
  out += '\n';
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index j = 0; j < ds.dim(); ++j) out += format_double(ds.covariates(i, j)) + ",";
    out += std::to_string(ds.treatment(i)) + "," + format_double(ds.outcome(i));
    if (ds.ground_truth) {
      out += "," + format_double(ds.ground_truth->mu0(i)) + "," +
             format_double(ds.ground_truth->mu1(i));
    }
    if (ds.randomized_flag) out += "," + std::to_string((*ds.randomized_flag)(i));
    out += '\n';
  }
  return out;
}

void write_csv(const ObservationalDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_csv(ds);
}

}  // namespace cfr
