#include "cfr/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cfr/error.hpp"
#include "cfr/logistic.hpp"

namespace cfr::nn {

void NetworkArchitecture::validate() const {
  if (input_dim < 1) throw ConfigError("input_dim must be at least 1");
  if (rep_layers.empty()) throw ConfigError("at least one representation layer is required");
  if (head_layers.empty()) throw ConfigError("at least one hypothesis layer is required");
  for (Index w : rep_layers)
    if (w < 1) throw ConfigError("representation layer widths must be at least 1");
  for (Index w : head_layers)
    if (w < 1) throw ConfigError("hypothesis layer widths must be at least 1");
}

// ---------------------------------------------------------------------------
// ParameterSet

namespace {

std::vector<DenseLayer> zeros_like(const std::vector<DenseLayer>& layers) {
  std::vector<DenseLayer> out;
  out.reserve(layers.size());
  for (const auto& l : layers)
    out.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  return out;
}

bool layers_equal(const std::vector<DenseLayer>& a, const std::vector<DenseLayer>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].weight.rows() != b[i].weight.rows() || a[i].weight.cols() != b[i].weight.cols() ||
        a[i].bias.size() != b[i].bias.size())
      return false;
    if (a[i].weight != b[i].weight || a[i].bias != b[i].bias) return false;
  }
  return true;
}

}  // namespace

ParameterSet ParameterSet::zeros_like() const {
  return {nn::zeros_like(rep), nn::zeros_like(head0), nn::zeros_like(head1)};
}

std::vector<ParameterSet::Tensor> ParameterSet::tensors() {
  std::vector<Tensor> out;
  auto add = [&](std::vector<DenseLayer>& layers, Part part) {
    for (auto& l : layers) {
      out.push_back({{l.weight.data(), static_cast<std::size_t>(l.weight.size())}, part, false});
      out.push_back({{l.bias.data(), static_cast<std::size_t>(l.bias.size())}, part, true});
    }
  };
  add(rep, Part::representation);
  add(head0, Part::head0);
  add(head1, Part::head1);
  return out;
}

std::vector<std::span<const double>> ParameterSet::tensors() const {
  std::vector<std::span<const double>> out;
  auto add = [&](const std::vector<DenseLayer>& layers) {
    for (const auto& l : layers) {
      out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
      out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
  };
  add(rep);
  add(head0);
  add(head1);
  return out;
}

Index ParameterSet::parameter_count() const {
  Index n = 0;
  for (const auto& t : tensors()) n += static_cast<Index>(t.size());
  return n;
}

double ParameterSet::head_weight_squared_norm() const {
  double s = 0.0;
  for (const auto& l : head0) s += l.weight.squaredNorm();
  for (const auto& l : head1) s += l.weight.squaredNorm();
  return s;
}

bool ParameterSet::all_finite() const {
  for (const auto& t : tensors())
    for (double v : t)
      if (!std::isfinite(v)) return false;
  return true;
}

bool ParameterSet::operator==(const ParameterSet& other) const {
  return layers_equal(rep, other.rep) && layers_equal(head0, other.head0) &&
         layers_equal(head1, other.head1);
}

// ---------------------------------------------------------------------------
// Network

Network::Network(NetworkArchitecture arch, ParameterSet params)
    : arch_(std::move(arch)), params_(std::move(params)) {
  arch_.validate();
  auto check = [](const std::vector<DenseLayer>& layers, Index fan_in,
                  const std::vector<Index>& widths, bool output, const char* what) {
    const std::size_t expected = widths.size() + (output ? 1 : 0);
    if (layers.size() != expected)
      throw ArgumentError(std::string(what) + ": wrong number of layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const Index fan_out = i < widths.size() ? widths[i] : 1;
      if (layers[i].weight.rows() != fan_in || layers[i].weight.cols() != fan_out ||
          layers[i].bias.size() != fan_out)
        throw ArgumentError(std::string(what) + ": layer " + std::to_string(i) +
                            " shape does not match the architecture");
      fan_in = fan_out;
    }
  };
  check(params_.rep, arch_.input_dim, arch_.rep_layers, false, "representation");
  check(params_.head0, arch_.rep_dim(), arch_.head_layers, true, "head0");
  check(params_.head1, arch_.rep_dim(), arch_.head_layers, true, "head1");
}

Network Network::init(const NetworkArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  auto make_stack = [&](Index fan_in, const std::vector<Index>& widths, bool output) {
    std::vector<DenseLayer> layers;
    std::vector<Index> outs = widths;
    if (output) outs.push_back(1);
    for (Index fan_out : outs) {
      std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
      DenseLayer l{Matrix(fan_in, fan_out), Vector::Zero(fan_out)};
      for (Index c = 0; c < fan_out; ++c)
        for (Index r = 0; r < fan_in; ++r) l.weight(r, c) = normal(rng);
      layers.push_back(std::move(l));
      fan_in = fan_out;
    }
    return layers;
  };
  ParameterSet p;
  p.rep = make_stack(arch.input_dim, arch.rep_layers, false);
  p.head0 = make_stack(arch.rep_dim(), arch.head_layers, true);
  p.head1 = make_stack(arch.rep_dim(), arch.head_layers, true);
  return Network(arch, std::move(p));
}

bool Network::operator==(const Network& other) const {
  const auto& a = arch_;
  const auto& b = other.arch_;
  return a.input_dim == b.input_dim && a.rep_layers == b.rep_layers &&
         a.head_layers == b.head_layers && a.rep_normalization == b.rep_normalization &&
         a.outcome_kind == b.outcome_kind && a.rep_activation == b.rep_activation &&
         params_ == other.params_;
}

// ---------------------------------------------------------------------------
// Forward

double elu(double z) { return z > 0.0 ? z : std::expm1(z); }

namespace {

double elu_derivative(double z) { return z > 0.0 ? 1.0 : std::exp(z); }

Matrix affine(const Matrix& x, const DenseLayer& l) {
  Matrix z = x * l.weight;
  z.rowwise() += l.bias.transpose();
  return z;
}

Matrix activate(const Matrix& z, Activation act) {
  if (act == Activation::identity) return z;
  return z.unaryExpr([](double v) { return elu(v); });
}

Matrix activation_derivative(const Matrix& z, Activation act) {
  if (act == Activation::identity) return Matrix::Ones(z.rows(), z.cols());
  return z.unaryExpr([](double v) { return elu_derivative(v); });
}

// Pre-activations of every representation layer plus the raw and projected output.
struct RepCache {
  std::vector<Matrix> inputs;  // input to layer l
  std::vector<Matrix> pre;     // pre-activation of layer l
  Matrix raw;                  // last layer activation
  Matrix out;                  // after projection
  Vector norms;                // row norms of raw (projection only)
  std::vector<Index> unprojected;
};

RepCache rep_forward(const Network& net, const Matrix& x) {
  const auto& arch = net.architecture();
  if (x.rows() < 1) throw ArgumentError("representation: empty batch");
  if (x.cols() != arch.input_dim)
    throw ArgumentError("representation: input has " + std::to_string(x.cols()) +
                        " columns, network expects " + std::to_string(arch.input_dim));
  RepCache c;
  Matrix a = x;
  const auto& layers = net.params().rep;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    c.inputs.push_back(a);
    Matrix z = affine(a, layers[l]);
    a = activate(z, arch.rep_activation);
    c.pre.push_back(std::move(z));
    if (!a.allFinite())
      throw NumericError("non-finite values in representation layer " + std::to_string(l));
  }
  c.raw = a;
  c.out = a;
  if (arch.rep_normalization == RepNormalization::unit_l2_projection) {
    c.norms = a.rowwise().norm();
    for (Index i = 0; i < a.rows(); ++i) {
      if (c.norms(i) > 0.0) {
        c.out.row(i) /= c.norms(i);
      } else {
        c.unprojected.push_back(i);
      }
    }
  }
  return c;
}

struct HeadCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre;
  Vector logit;
  Vector prediction;
};

HeadCache head_forward(const Network& net, const Matrix& rep, int t) {
  const auto& layers = net.params().head(t);
  HeadCache c;
  Matrix a = rep;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    c.inputs.push_back(a);
    Matrix z = affine(a, layers[l]);
    const bool output = l + 1 == layers.size();
    a = output ? z : activate(z, Activation::elu);
    c.pre.push_back(std::move(z));
    if (!a.allFinite())
      throw NumericError("non-finite values in head" + std::to_string(t) + " layer " +
                         std::to_string(l));
  }
  c.logit = a.col(0);
  if (net.architecture().outcome_kind == OutcomeKind::binary) {
    c.prediction = c.logit.unaryExpr([](double v) { return sigmoid(v); });
  } else {
    c.prediction = c.logit;
  }
  return c;
}

Matrix gather_rows(const Matrix& m, const std::vector<Index>& idx) {
  Matrix out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Index>(r)) = m.row(idx[r]);
  return out;
}

}  // namespace

Representation represent(const Network& net, const Matrix& x) {
  RepCache c = rep_forward(net, x);
  return {std::move(c.out), std::move(c.unprojected)};
}

Matrix representation(const Network& net, const Matrix& x) { return represent(net, x).values; }

Matrix representation_pre_projection(const Network& net, const Matrix& x) {
  return rep_forward(net, x).raw;
}

Vector head_output(const Network& net, const Matrix& rep, int t) {
  return head_forward(net, rep, t).prediction;
}

Vector forward(const Network& net, const Matrix& x, const IntVector& t) {
  if (t.size() != x.rows()) throw ArgumentError("forward: treatment length mismatch");
  const Matrix rep = representation(net, x);
  Vector pred(x.rows());
  for (int arm = 0; arm < 2; ++arm) {
    std::vector<Index> rows;
    for (Index i = 0; i < t.size(); ++i)
      if (t(i) == arm) rows.push_back(i);
    if (rows.empty()) continue;
    const Vector p = head_output(net, gather_rows(rep, rows), arm);
    for (std::size_t r = 0; r < rows.size(); ++r) pred(rows[r]) = p(static_cast<Index>(r));
  }
  return pred;
}

PotentialOutcomes predict_potential_outcomes(const Network& net, const Matrix& x) {
  const Matrix rep = representation(net, x);
  return {head_output(net, rep, 0), head_output(net, rep, 1)};
}

// ---------------------------------------------------------------------------
// Backward

namespace {

constexpr double kProbClamp = 1e-12;

std::vector<DenseLayer> rep_backward(const Network& net, const RepCache& c, Matrix grad_out) {
  const auto& arch = net.architecture();
  const auto& layers = net.params().rep;
  std::vector<DenseLayer> grads = zeros_like(layers);
  Matrix g = std::move(grad_out);
  if (arch.rep_normalization == RepNormalization::unit_l2_projection) {
    // d(z/|z|) = (I - r r^T) dz / |z|; zero rows passed through unscaled.
    for (Index i = 0; i < g.rows(); ++i) {
      const double n = c.norms(i);
      if (n == 0.0) continue;
      const Eigen::RowVectorXd r = c.out.row(i);
      const double proj = r.dot(g.row(i));
      g.row(i) = (g.row(i) - proj * r) / n;
    }
  }
  for (std::size_t k = layers.size(); k-- > 0;) {
    const Matrix dz = g.cwiseProduct(activation_derivative(c.pre[k], arch.rep_activation));
    grads[k].weight = c.inputs[k].transpose() * dz;
    grads[k].bias = dz.colwise().sum().transpose();
    if (k > 0) g = dz * layers[k].weight.transpose();
  }
  return grads;
}

}  // namespace

double sample_loss(double prediction, double y, LossKind kind) {
  if (kind == LossKind::squared) return (prediction - y) * (prediction - y);
  const double p = std::clamp(prediction, kProbClamp, 1.0 - kProbClamp);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

BackwardResult backward(const Network& net, const Matrix& x, const IntVector& t, const Vector& y,
                        const Vector& sample_weights, LossKind loss_kind,
                        const std::optional<Matrix>& upstream_rep_grad) {
  const Index m = x.rows();
  if (t.size() != m || y.size() != m || sample_weights.size() != m)
    throw ArgumentError("backward: batch vectors must match the number of rows");
  if ((sample_weights.array() < 0.0).any())
    throw ArgumentError("backward: sample weights must be nonnegative");
  const bool binary = net.architecture().outcome_kind == OutcomeKind::binary;
  if (loss_kind == LossKind::log_loss && !binary)
    throw ArgumentError("backward: log-loss requires a binary-outcome network");

  const RepCache rc = rep_forward(net, x);
  BackwardResult result;
  result.loss_grad = net.params().zeros_like();
  result.upstream_grad = net.params().zeros_like();
  Matrix grad_rep = Matrix::Zero(rc.out.rows(), rc.out.cols());
  const double inv_m = 1.0 / static_cast<double>(m);

  for (int arm = 0; arm < 2; ++arm) {
    std::vector<Index> rows;
    for (Index i = 0; i < m; ++i)
      if (t(i) == arm) rows.push_back(i);
    if (rows.empty()) continue;
    const HeadCache hc = head_forward(net, gather_rows(rc.out, rows), arm);
    const Index mh = static_cast<Index>(rows.size());
    Vector dlogit(mh);
    for (Index r = 0; r < mh; ++r) {
      const Index i = rows[static_cast<std::size_t>(r)];
      const double w = sample_weights(i) * inv_m;
      const double p = hc.prediction(r);
      result.loss += w * sample_loss(p, y(i), loss_kind);
      if (loss_kind == LossKind::squared) {
        const double dp = 2.0 * (p - y(i));
        dlogit(r) = w * (binary ? dp * p * (1.0 - p) : dp);
      } else {
        const bool clamped = p < kProbClamp || p > 1.0 - kProbClamp;
        dlogit(r) = clamped ? 0.0 : w * (p - y(i));
      }
    }
    const auto& layers = net.params().head(arm);
    auto& grads = result.loss_grad.head(arm);
    Matrix g = dlogit;
    for (std::size_t k = layers.size(); k-- > 0;) {
      Matrix dz = g;
      if (k + 1 != layers.size()) dz = g.cwiseProduct(activation_derivative(hc.pre[k], Activation::elu));
      grads[k].weight = hc.inputs[k].transpose() * dz;
      grads[k].bias = dz.colwise().sum().transpose();
      g = dz * layers[k].weight.transpose();
    }
    for (Index r = 0; r < mh; ++r) grad_rep.row(rows[static_cast<std::size_t>(r)]) = g.row(r);
  }
  result.loss_grad.rep = rep_backward(net, rc, std::move(grad_rep));

  if (upstream_rep_grad) {
    if (upstream_rep_grad->rows() != rc.out.rows() || upstream_rep_grad->cols() != rc.out.cols())
      throw ArgumentError("backward: upstream representation gradient has the wrong shape");
    result.upstream_grad.rep = rep_backward(net, rc, *upstream_rep_grad);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr const char* kMagic = "cfr-network";
constexpr int kFormatVersion = 1;

std::string activation_name(Activation a) { return a == Activation::elu ? "elu" : "identity"; }

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_widths(std::ostringstream& out, const char* key, const std::vector<Index>& widths) {
  out << key;
  for (Index w : widths) out << ' ' << w;
  out << '\n';
}

void write_stack(std::ostringstream& out, const char* name, const std::vector<DenseLayer>& layers) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].weight;
    out << "tensor " << name << ' ' << l << " weight " << w.rows() << ' ' << w.cols() << '\n';
    for (Index r = 0; r < w.rows(); ++r) {
      for (Index c = 0; c < w.cols(); ++c) out << (c ? " " : "") << format_double(w(r, c));
      out << '\n';
    }
    const auto& b = layers[l].bias;
    out << "tensor " << name << ' ' << l << " bias 1 " << b.size() << '\n';
    for (Index c = 0; c < b.size(); ++c) out << (c ? " " : "") << format_double(b(c));
    out << '\n';
  }
}

std::vector<Index> read_widths(std::istringstream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("truncated network header", 0);
  std::istringstream ls(line);
  std::string k;
  ls >> k;
  if (k != key) throw ParseError("expected '" + key + "', found '" + k + "'", 0);
  std::vector<Index> out;
  Index w = 0;
  while (ls >> w) out.push_back(w);
  return out;
}

std::string read_value(std::istringstream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("truncated network header", 0);
  std::istringstream ls(line);
  std::string k;
  std::string v;
  ls >> k >> v;
  if (k != key) throw ParseError("expected '" + key + "', found '" + k + "'", 0);
  return v;
}

void read_tensor(std::istringstream& in, const std::string& name, std::size_t layer,
                 const std::string& kind, double* data, Index rows, Index cols, bool row_major_matrix,
                 Matrix* mat) {
  std::string tag;
  std::string got_name;
  std::size_t got_layer = 0;
  std::string got_kind;
  Index r = 0;
  Index c = 0;
  in >> tag >> got_name >> got_layer >> got_kind >> r >> c;
  if (!in || tag != "tensor" || got_name != name || got_layer != layer || got_kind != kind ||
      r != rows || c != cols) {
    throw ParseError("unexpected tensor header for " + name + " layer " + std::to_string(layer) +
                         " " + kind,
                     0);
  }
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      std::string tok;
      if (!(in >> tok)) throw ParseError("truncated tensor data", 0);
      const double v = std::strtod(tok.c_str(), nullptr);
      if (row_major_matrix) {
        (*mat)(i, j) = v;
      } else {
        data[j] = v;
      }
    }
  }
}

void read_stack(std::istringstream& in, const char* name, std::vector<DenseLayer>& layers) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& w = layers[l].weight;
    read_tensor(in, name, l, "weight", nullptr, w.rows(), w.cols(), true, &w);
    auto& b = layers[l].bias;
    read_tensor(in, name, l, "bias", b.data(), 1, b.size(), false, nullptr);
  }
}

}  // namespace

std::string to_string(RepNormalization n) {
  return n == RepNormalization::unit_l2_projection ? "unit_l2_projection" : "none";
}

RepNormalization rep_normalization_from_string(const std::string& s) {
  if (s == "unit_l2_projection" || s == "projection") return RepNormalization::unit_l2_projection;
  if (s == "none") return RepNormalization::none;
  throw ConfigError("unknown representation normalization '" + s + "'");
}

std::string to_text(const Network& net) {
  const auto& a = net.architecture();
  std::ostringstream out;
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "input_dim " << a.input_dim << '\n';
  write_widths(out, "rep_layers", a.rep_layers);
  write_widths(out, "head_layers", a.head_layers);
  out << "rep_normalization " << to_string(a.rep_normalization) << '\n';
  out << "outcome_kind " << (a.outcome_kind == OutcomeKind::binary ? "binary" : "continuous")
      << '\n';
  out << "rep_activation " << activation_name(a.rep_activation) << '\n';
  write_stack(out, "rep", net.params().rep);
  write_stack(out, "head0", net.params().head0);
  write_stack(out, "head1", net.params().head1);
  return out.str();
}

Network from_text(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kMagic) throw ParseError("not a network file", 1);
  if (version != kFormatVersion)
    throw ParseError("unsupported network format version " + std::to_string(version), 1);
  in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
  NetworkArchitecture a;
  a.input_dim = std::stol(read_value(in, "input_dim"));
  a.rep_layers = read_widths(in, "rep_layers");
  a.head_layers = read_widths(in, "head_layers");
  a.rep_normalization = rep_normalization_from_string(read_value(in, "rep_normalization"));
  const std::string kind = read_value(in, "outcome_kind");
  a.outcome_kind = kind == "binary" ? OutcomeKind::binary : OutcomeKind::continuous;
  a.rep_activation =
      read_value(in, "rep_activation") == "identity" ? Activation::identity : Activation::elu;
  a.validate();
  // Shapes come from a zero-initialised network of the same architecture.
  Network shaped = Network::init(a, 0);
  ParameterSet p = shaped.params().zeros_like();
  read_stack(in, "rep", p.rep);
  read_stack(in, "head0", p.head0);
  read_stack(in, "head1", p.head1);
  return Network(a, std::move(p));
}

void save(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_text(net);
}

Network load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

}  // namespace cfr::nn
