#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "caleb/error.hpp"
#include "caleb/rng.hpp"

namespace caleb::nn {

/// Row-major convention throughout: one sample per row.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { leaky_relu, sigmoid, linear, softmax };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::linear: return "linear";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "linear") return Activation::linear;
  if (s == "softmax") return Activation::softmax;
  throw Error(ErrorCode::BadConfig, "unknown activation '" + s + "'");
}

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::linear;
  double alpha = 0.2;  // leaky-ReLU negative slope

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
};

/// Feed-forward stack of dense layers. Every mutable access to the parameters
/// bumps `version()`, which invalidates tapes recorded earlier.
class DenseNet {
 public:
  DenseNet() = default;

  explicit DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      if (layers_[k].bias.size() != layers_[k].out())
        throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(k) + " bias does not match its output width");
      if (k > 0 && layers_[k].in() != layers_[k - 1].out())
        throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(k) + " input does not chain");
    }
  }

  /// widths = {in, hidden..., out}; weights ~ N(0, init_std^2), biases 0.
  static DenseNet make(std::span<const std::size_t> widths, Activation hidden, Activation output, Rng& rng,
                       double alpha = 0.2, double init_std = 0.02) {
    if (widths.size() < 2) throw Error(ErrorCode::BadConfig, "a network needs at least input and output widths");
    std::vector<DenseLayer> layers;
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
      if (widths[k] == 0 || widths[k + 1] == 0) throw Error(ErrorCode::BadConfig, "zero layer width");
      DenseLayer l;
      l.weight.resize(static_cast<Eigen::Index>(widths[k + 1]), static_cast<Eigen::Index>(widths[k]));
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j)
        for (Eigen::Index i = 0; i < l.weight.rows(); ++i) l.weight(i, j) = rng.normal(0.0, init_std);
      l.bias = Vector::Zero(l.weight.rows());
      l.activation = k + 2 == widths.size() ? output : hidden;
      l.alpha = alpha;
      layers.push_back(std::move(l));
    }
    return DenseNet(std::move(layers));
  }

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::size_t depth() const noexcept { return layers_.size(); }
  Eigen::Index input_width() const { return layers_.empty() ? 0 : layers_.front().in(); }
  Eigen::Index output_width() const { return layers_.empty() ? 0 : layers_.back().out(); }
  std::uint64_t version() const noexcept { return version_; }

  /// Mutable layer access for direct edits (tests, checkpoint loading).
  DenseLayer& layer(std::size_t k) {
    ++version_;
    return layers_.at(k);
  }

  /// Weight then bias of each layer, in layer order.
  std::vector<std::span<double>> parameters() {
    ++version_;
    std::vector<std::span<double>> out;
    for (auto& l : layers_) {
      out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
      out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
    return out;
  }

  std::vector<std::span<const double>> parameters() const {
    std::vector<std::span<const double>> out;
    for (const auto& l : layers_) {
      out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
      out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

 private:
  std::vector<DenseLayer> layers_;
  std::uint64_t version_ = 0;
};

/// Activations cached by a forward pass: activations[0] is the input,
/// activations[k + 1] the output of layer k.
struct Tape {
  const DenseNet* net = nullptr;
  std::uint64_t version = 0;
  std::vector<Matrix> activations;

  const Matrix& output() const { return activations.back(); }
};

namespace detail {

inline void apply_activation(Matrix& z, Activation act, double alpha) {
  switch (act) {
    case Activation::leaky_relu:
      z = z.unaryExpr([alpha](double v) { return v > 0.0 ? v : alpha * v; });
      break;
    case Activation::sigmoid:
      z = z.unaryExpr([](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
      break;
    case Activation::linear:
      break;
    case Activation::softmax:
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double mx = z.row(i).maxCoeff();
        z.row(i) = (z.row(i).array() - mx).exp().matrix();
        z.row(i) /= z.row(i).sum();
      }
      break;
  }
}

// Gradient w.r.t. the pre-activation given the layer output y and the
// gradient w.r.t. y.
inline Matrix activation_backward(const Matrix& y, const Matrix& gy, Activation act, double alpha) {
  switch (act) {
    case Activation::leaky_relu:
      return gy.binaryExpr(y, [alpha](double g, double v) { return v > 0.0 ? g : alpha * g; });
    case Activation::sigmoid:
      return (gy.array() * y.array() * (1.0 - y.array())).matrix();
    case Activation::linear:
      return gy;
    case Activation::softmax: {
      Matrix gz(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const double dot = gy.row(i).dot(y.row(i));
        gz.row(i) = (y.row(i).array() * (gy.row(i).array() - dot)).matrix();
      }
      return gz;
    }
  }
  return gy;
}

}  // namespace detail

inline Tape forward(const DenseNet& net, const Matrix& x) {
  if (net.depth() == 0) throw Error(ErrorCode::ShapeMismatch, "empty network");
  if (x.cols() != net.input_width())
    throw Error(ErrorCode::ShapeMismatch, "input width " + std::to_string(x.cols()) + " != network input " +
                                              std::to_string(net.input_width()));
  Tape tape{&net, net.version(), {}};
  tape.activations.reserve(net.depth() + 1);
  tape.activations.push_back(x);
  for (const auto& l : net.layers()) {
    Matrix z = (tape.activations.back() * l.weight.transpose()).rowwise() + l.bias.transpose();
    detail::apply_activation(z, l.activation, l.alpha);
    if (!z.allFinite()) throw Error(ErrorCode::NonFiniteActivation, "non-finite activation in forward pass");
    tape.activations.push_back(std::move(z));
  }
  return tape;
}

struct ParamGrads {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  /// Same ordering as DenseNet::parameters().
  std::vector<std::span<const double>> views() const {
    std::vector<std::span<const double>> out;
    for (std::size_t k = 0; k < weight.size(); ++k) {
      out.emplace_back(weight[k].data(), static_cast<std::size_t>(weight[k].size()));
      out.emplace_back(bias[k].data(), static_cast<std::size_t>(bias[k].size()));
    }
    return out;
  }

  bool all_zero() const {
    for (const auto& w : weight)
      if (!w.isZero(0.0)) return false;
    for (const auto& b : bias)
      if (!b.isZero(0.0)) return false;
    return true;
  }
};

struct Backward {
  ParamGrads grads;
  Matrix input_grad;
};

/// Back-propagates `grad_output` (d loss / d output) through the pass recorded
/// on `tape`.
inline Backward backward(const DenseNet& net, const Tape& tape, const Matrix& grad_output) {
  if (tape.net != &net || tape.version != net.version() || tape.activations.size() != net.depth() + 1)
    throw Error(ErrorCode::StaleTape, "tape was not produced by this network in its current state");
  const Matrix& out = tape.output();
  if (grad_output.rows() != out.rows() || grad_output.cols() != out.cols())
    throw Error(ErrorCode::ShapeMismatch, "grad_output shape does not match the network output");

  Backward result;
  result.grads.weight.resize(net.depth());
  result.grads.bias.resize(net.depth());
  Matrix g = grad_output;
  for (std::size_t k = net.depth(); k-- > 0;) {
    const auto& l = net.layers()[k];
    Matrix gz = detail::activation_backward(tape.activations[k + 1], g, l.activation, l.alpha);
    result.grads.weight[k] = gz.transpose() * tape.activations[k];
    result.grads.bias[k] = gz.colwise().sum().transpose();
    g = gz * l.weight;
  }
  result.input_grad = std::move(g);
  return result;
}

struct Loss {
  double value = 0.0;
  Matrix grad;  // d value / d input, same shape as the input
};

constexpr double kProbClip = 1e-7;

/// Mean binary cross-entropy over every element; probabilities are clamped to
/// [kProbClip, 1 - kProbClip] first.
inline Loss bce_loss(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw Error(ErrorCode::ShapeMismatch, "bce_loss: prediction and target shapes differ");
  const double n = static_cast<double>(pred.size());
  Loss out;
  out.grad.resize(pred.rows(), pred.cols());
  double sum = 0.0;
  for (Eigen::Index j = 0; j < pred.cols(); ++j) {
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      const double p = std::clamp(pred(i, j), kProbClip, 1.0 - kProbClip);
      const double t = target(i, j);
      sum += t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
      out.grad(i, j) = -(t / p - (1.0 - t) / (1.0 - p)) / n;
    }
  }
  out.value = -sum / n;
  return out;
}

inline Loss bce_loss(const Matrix& pred, double target) {
  return bce_loss(pred, Matrix::Constant(pred.rows(), pred.cols(), target));
}

/// Mean over rows of -log softmax(logits)[label]; grad = (softmax - onehot) / n.
inline Loss softmax_ce_loss(const Matrix& logits, std::span<const std::size_t> labels) {
  if (logits.cols() < 2) throw Error(ErrorCode::ShapeMismatch, "softmax_ce_loss needs at least 2 classes");
  if (static_cast<std::size_t>(logits.rows()) != labels.size())
    throw Error(ErrorCode::ShapeMismatch, "softmax_ce_loss: logits rows != labels");
  const double n = static_cast<double>(logits.rows());
  Loss out;
  out.grad.resize(logits.rows(), logits.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto y = labels[static_cast<std::size_t>(i)];
    if (y >= static_cast<std::size_t>(logits.cols()))
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(y) + " >= " + std::to_string(logits.cols()));
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    sum += std::log(z) - (logits(i, static_cast<Eigen::Index>(y)) - mx);
    out.grad.row(i) = e / (z * n);
    out.grad(i, static_cast<Eigen::Index>(y)) -= 1.0 / n;
  }
  out.value = sum / n;
  return out;
}

/// Row-wise softmax.
inline Matrix softmax(const Matrix& logits) {
  Matrix p = logits;
  detail::apply_activation(p, Activation::softmax, 0.0);
  return p;
}

/// Label embedding table, K x E.
struct Embedding {
  Matrix table;

  static Embedding make(std::size_t classes, std::size_t width, Rng& rng, double init_std = 1.0) {
    Embedding e;
    e.table.resize(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(width));
    for (Eigen::Index j = 0; j < e.table.cols(); ++j)
      for (Eigen::Index i = 0; i < e.table.rows(); ++i) e.table(i, j) = rng.normal(0.0, init_std);
    return e;
  }

  std::size_t classes() const { return static_cast<std::size_t>(table.rows()); }
  std::size_t width() const { return static_cast<std::size_t>(table.cols()); }

  std::vector<std::span<double>> parameters() { return {std::span<double>(table.data(), static_cast<std::size_t>(table.size()))}; }
};

inline Matrix embed_lookup(const Embedding& e, std::span<const std::size_t> labels) {
  Matrix out(static_cast<Eigen::Index>(labels.size()), e.table.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= e.classes())
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(labels[i]) + " >= " + std::to_string(e.classes()));
    out.row(static_cast<Eigen::Index>(i)) = e.table.row(static_cast<Eigen::Index>(labels[i]));
  }
  return out;
}

/// Gradient w.r.t. the table; rows hit by several samples accumulate.
inline Matrix embed_backward(const Embedding& e, std::span<const std::size_t> labels, const Matrix& grad) {
  if (static_cast<std::size_t>(grad.rows()) != labels.size() || grad.cols() != e.table.cols())
    throw Error(ErrorCode::ShapeMismatch, "embed_backward: gradient shape mismatch");
  Matrix g = Matrix::Zero(e.table.rows(), e.table.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= e.classes())
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(labels[i]) + " >= " + std::to_string(e.classes()));
    g.row(static_cast<Eigen::Index>(labels[i])) += grad.row(static_cast<Eigen::Index>(i));
  }
  return g;
}

struct AdamConfig {
  double lr = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments for a flat list of parameter tensors.
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;

  static AdamState zeros_like(std::span<const std::span<double>> params, AdamConfig cfg) {
    AdamState s;
    s.config = cfg;
    for (const auto& p : params) {
      s.m.emplace_back(p.size(), 0.0);
      s.v.emplace_back(p.size(), 0.0);
    }
    return s;
  }
};

/// One bias-corrected Adam update of `params` in place.
inline void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                      AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw Error(ErrorCode::ShapeMismatch, "adam_step: tensor count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k)
    if (params[k].size() != grads[k].size() || params[k].size() != state.m[k].size())
      throw Error(ErrorCode::ShapeMismatch, "adam_step: tensor " + std::to_string(k) + " size mismatch");

  const auto& c = state.config;
  ++state.t;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double g = grads[k][i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      params[k][i] -= c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
    }
  }
}

// ---- checkpoint serialization -------------------------------------------

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k) data[static_cast<std::size_t>(i * m.cols() + k)] = m(i, k);
  j["data"] = std::move(data);
  return j;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw Error(ErrorCode::ShapeMismatch, "checkpoint matrix payload does not match its shape");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
  return m;
}

inline nlohmann::json to_json(const DenseNet& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    layers.push_back({{"in", l.in()},
                      {"out", l.out()},
                      {"activation", to_string(l.activation)},
                      {"alpha", l.alpha},
                      {"weight", matrix_to_json(l.weight)},
                      {"bias", matrix_to_json(l.bias)}});
  }
  return {{"layers", layers}};
}

inline DenseNet dense_net_from_json(const nlohmann::json& j) {
  std::vector<DenseLayer> layers;
  for (const auto& lj : j.at("layers")) {
    DenseLayer l;
    l.weight = matrix_from_json(lj.at("weight"));
    l.bias = matrix_from_json(lj.at("bias"));
    l.activation = activation_from_string(lj.at("activation").get<std::string>());
    l.alpha = lj.at("alpha").get<double>();
    layers.push_back(std::move(l));
  }
  return DenseNet(std::move(layers));
}

inline nlohmann::json to_json(const AdamState& s) {
  return {{"lr", s.config.lr}, {"beta1", s.config.beta1}, {"beta2", s.config.beta2},
          {"eps", s.config.eps}, {"t", s.t},           {"m", s.m},
          {"v", s.v}};
}

inline AdamState adam_state_from_json(const nlohmann::json& j) {
  AdamState s;
  s.config = {j.at("lr").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
              j.at("eps").get<double>()};
  s.t = j.at("t").get<std::uint64_t>();
  s.m = j.at("m").get<std::vector<std::vector<double>>>();
  s.v = j.at("v").get<std::vector<std::vector<double>>>();
  return s;
}

}  // namespace caleb::nn
