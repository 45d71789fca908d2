#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace rsscm::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Softmax over groups of `group` consecutive rows; kSoftmax uses all rows.
enum class Activation { kIdentity, kSigmoid, kRelu, kSoftmax, kGroupSoftmax };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

struct TrainingDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Affine map W·x + b followed by an activation. Batches are column-major:
/// one sample per column. A nonempty `connectivity` (0/1, shape of W) pins
/// masked weights to zero.
template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weight;
  Vector<Scalar> bias;
  Matrix<Scalar> connectivity;
  Activation activation = Activation::kIdentity;
  int group = 0;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

template <typename Scalar>
Matrix<Scalar> activate(Activation a, int group, const Matrix<Scalar>& pre) {
  switch (a) {
    case Activation::kIdentity:
      return pre;
    case Activation::kSigmoid:
      return (Scalar(1) + (-pre.array()).exp()).inverse().matrix();
    case Activation::kRelu:
      return pre.cwiseMax(Scalar(0));
    case Activation::kSoftmax:
    case Activation::kGroupSoftmax: {
      const Eigen::Index g = a == Activation::kSoftmax ? pre.rows() : group;
      Matrix<Scalar> out(pre.rows(), pre.cols());
      for (Eigen::Index start = 0; start < pre.rows(); start += g) {
        auto block = pre.middleRows(start, g);
        Matrix<Scalar> shifted = block.rowwise() - block.colwise().maxCoeff();
        Matrix<Scalar> e = shifted.array().exp().matrix();
        out.middleRows(start, g) = e.array().rowwise() / e.colwise().sum().array();
      }
      return out;
    }
  }
  throw std::logic_error("unknown activation");
}

/// dL/dpre from dL/dout, using the stored activation output.
template <typename Scalar>
Matrix<Scalar> activation_backward(Activation a, int group, const Matrix<Scalar>& pre,
                                   const Matrix<Scalar>& out, const Matrix<Scalar>& grad_out) {
  switch (a) {
    case Activation::kIdentity:
      return grad_out;
    case Activation::kSigmoid:
      return (grad_out.array() * out.array() * (Scalar(1) - out.array())).matrix();
    case Activation::kRelu:
      return (grad_out.array() * (pre.array() > Scalar(0)).template cast<Scalar>()).matrix();
    case Activation::kSoftmax:
    case Activation::kGroupSoftmax: {
      const Eigen::Index g = a == Activation::kSoftmax ? pre.rows() : group;
      Matrix<Scalar> grad(pre.rows(), pre.cols());
      for (Eigen::Index start = 0; start < pre.rows(); start += g) {
        auto p = out.middleRows(start, g).array();
        auto go = grad_out.middleRows(start, g).array();
        const auto dot = (p * go).colwise().sum();
        grad.middleRows(start, g) = (p * (go.rowwise() - dot)).matrix();
      }
      return grad;
    }
  }
  throw std::logic_error("unknown activation");
}

template <typename Scalar>
struct Gradients {
  std::vector<Matrix<Scalar>> weight;
  std::vector<Vector<Scalar>> bias;

  Scalar squared_norm() const {
    Scalar s(0);
    for (const auto& w : weight) s += w.squaredNorm();
    for (const auto& b : bias) s += b.squaredNorm();
    return s;
  }
};

/// Per-layer values recorded by forward() for backward().
template <typename Scalar>
struct Tape {
  std::vector<Matrix<Scalar>> inputs;
  std::vector<Matrix<Scalar>> pre;
  std::vector<Matrix<Scalar>> outputs;
};

template <typename Scalar>
class Network {
 public:
  Network() = default;

  void add_layer(DenseLayer<Scalar> layer) {
    if (!layers_.empty() && layers_.back().out_dim() != layer.in_dim()) {
      throw std::invalid_argument("layer widths are incompatible");
    }
    if (layer.bias.size() != layer.out_dim()) throw std::invalid_argument("bias width mismatch");
    if (layer.connectivity.size() != 0) {
      if (layer.connectivity.rows() != layer.out_dim() || layer.connectivity.cols() != layer.in_dim()) {
        throw std::invalid_argument("connectivity mask shape mismatch");
      }
      layer.weight = layer.weight.cwiseProduct(layer.connectivity);
    }
    if (layer.activation == Activation::kGroupSoftmax &&
        (layer.group <= 0 || layer.out_dim() % layer.group != 0)) {
      throw std::invalid_argument("group softmax width must divide the layer width");
    }
    layers_.push_back(std::move(layer));
  }

  /// Glorot-uniform weights (masked where connectivity is set), zero biases.
  void add_dense(Eigen::Index in, Eigen::Index out, Activation act, std::mt19937_64& rng,
                 const Matrix<Scalar>& connectivity = {}, int group = 0) {
    DenseLayer<Scalar> layer;
    Scalar fan_in = Scalar(in);
    if (connectivity.size() != 0) fan_in = connectivity.rowwise().sum().maxCoeff();
    const Scalar limit = std::sqrt(Scalar(6) / (fan_in + Scalar(out)));
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    layer.weight.resize(out, in);
    for (Eigen::Index c = 0; c < in; ++c) {
      for (Eigen::Index r = 0; r < out; ++r) layer.weight(r, c) = limit * Scalar(unif(rng));
    }
    layer.bias = Vector<Scalar>::Zero(out);
    layer.connectivity = connectivity;
    layer.activation = act;
    layer.group = group;
    add_layer(std::move(layer));
  }

  const std::vector<DenseLayer<Scalar>>& layers() const { return layers_; }
  std::vector<DenseLayer<Scalar>>& mutable_layers() { return layers_; }
  Eigen::Index in_dim() const { return layers_.front().in_dim(); }
  Eigen::Index out_dim() const { return layers_.back().out_dim(); }
  bool empty() const { return layers_.empty(); }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Tape<Scalar>* tape = nullptr) const {
    if (layers_.empty()) throw std::logic_error("forward through an empty network");
    if (x.rows() != in_dim()) throw std::invalid_argument("input width mismatch");
    if (tape) *tape = Tape<Scalar>{};
    Matrix<Scalar> h = x;
    for (const auto& layer : layers_) {
      Matrix<Scalar> pre = (layer.weight * h).colwise() + layer.bias;
      Matrix<Scalar> out = activate(layer.activation, layer.group, pre);
      if (tape) {
        tape->inputs.push_back(std::move(h));
        tape->pre.push_back(std::move(pre));
        tape->outputs.push_back(out);
      }
      h = std::move(out);
    }
    return h;
  }

  Gradients<Scalar> zero_gradients() const {
    Gradients<Scalar> g;
    for (const auto& l : layers_) {
      g.weight.push_back(Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()));
      g.bias.push_back(Vector<Scalar>::Zero(l.bias.size()));
    }
    return g;
  }

  /// Accumulates parameter gradients into `grads` and returns dL/dx.
  Matrix<Scalar> backward(const Tape<Scalar>& tape, const Matrix<Scalar>& grad_out,
                          Gradients<Scalar>* grads) const {
    Matrix<Scalar> g = grad_out;
    for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
      const auto& layer = layers_[i];
      Matrix<Scalar> dpre = activation_backward(layer.activation, layer.group, tape.pre[i],
                                                tape.outputs[i], g);
      if (grads) {
        Matrix<Scalar> dw = dpre * tape.inputs[i].transpose();
        if (layer.connectivity.size() != 0) dw = dw.cwiseProduct(layer.connectivity);
        grads->weight[i] += dw;
        grads->bias[i] += dpre.rowwise().sum();
      }
      g = layer.weight.transpose() * dpre;
    }
    return g;
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  /// Parameters flattened layer by layer: weight (column-major), then bias.
  Vector<Scalar> flat_parameters() const {
    Vector<Scalar> out(parameter_count());
    Eigen::Index at = 0;
    for (const auto& l : layers_) {
      out.segment(at, l.weight.size()) = l.weight.reshaped();
      at += l.weight.size();
      out.segment(at, l.bias.size()) = l.bias;
      at += l.bias.size();
    }
    return out;
  }

  void set_flat_parameters(const Vector<Scalar>& flat) {
    if (flat.size() != parameter_count()) throw std::invalid_argument("parameter count mismatch");
    Eigen::Index at = 0;
    for (auto& l : layers_) {
      l.weight.reshaped() = flat.segment(at, l.weight.size());
      at += l.weight.size();
      if (l.connectivity.size() != 0) l.weight = l.weight.cwiseProduct(l.connectivity);
      l.bias = flat.segment(at, l.bias.size());
      at += l.bias.size();
    }
  }

  bool all_finite() const {
    for (const auto& l : layers_) {
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }

 private:
  std::vector<DenseLayer<Scalar>> layers_;
};

// ------------------------------------------------------------------ losses

template <typename Scalar>
struct LossResult {
  Scalar value = Scalar(0);
  Matrix<Scalar> grad;  // dL/d(network output)
};

/// Mean cross-entropy of softmax(logits) against integer labels (nats).
template <typename Scalar>
LossResult<Scalar> cross_entropy_with_logits(const Matrix<Scalar>& logits,
                                             const std::vector<int>& labels) {
  const Eigen::Index n = logits.cols();
  if (n == 0 || static_cast<Eigen::Index>(labels.size()) != n) {
    throw std::invalid_argument("cross entropy needs one label per column");
  }
  LossResult<Scalar> r;
  r.grad = activate<Scalar>(Activation::kSoftmax, 0, logits);
  for (Eigen::Index j = 0; j < n; ++j) {
    const int y = labels[j];
    if (y < 0 || y >= logits.rows()) throw std::invalid_argument("label outside the logit range");
    const Scalar m = logits.col(j).maxCoeff();
    const Scalar lse = m + std::log((logits.col(j).array() - m).exp().sum());
    r.value += lse - logits(y, j);
    r.grad(y, j) -= Scalar(1);
  }
  r.value /= Scalar(n);
  r.grad /= Scalar(n);
  return r;
}

/// Mean over samples of 0.5·‖out − target‖².
template <typename Scalar>
LossResult<Scalar> squared_error(const Matrix<Scalar>& out, const Matrix<Scalar>& target) {
  if (out.rows() != target.rows() || out.cols() != target.cols() || out.cols() == 0) {
    throw std::invalid_argument("squared error shape mismatch");
  }
  LossResult<Scalar> r;
  const Matrix<Scalar> diff = out - target;
  r.value = Scalar(0.5) * diff.squaredNorm() / Scalar(out.cols());
  r.grad = diff / Scalar(out.cols());
  return r;
}

struct LossSpec {
  enum class Kind { kCrossEntropy, kSquaredError } kind = Kind::kCrossEntropy;
  std::vector<int> labels;
  Eigen::MatrixXd targets;
};

template <typename Scalar>
struct GradientEvaluation {
  Scalar loss = Scalar(0);
  Gradients<Scalar> grads;
};

/// Loss and parameter gradients of one network on one batch.
template <typename Scalar>
GradientEvaluation<Scalar> evaluate_gradient(const Network<Scalar>& net, const Matrix<Scalar>& x,
                                             const LossSpec& spec) {
  if (x.cols() == 0) throw std::invalid_argument("empty batch");
  Tape<Scalar> tape;
  const Matrix<Scalar> out = net.forward(x, &tape);
  LossResult<Scalar> loss = spec.kind == LossSpec::Kind::kCrossEntropy
                                ? cross_entropy_with_logits<Scalar>(out, spec.labels)
                                : squared_error<Scalar>(out, spec.targets.template cast<Scalar>());
  if (!std::isfinite(static_cast<double>(loss.value))) {
    throw TrainingDivergence("non-finite loss in gradient evaluation");
  }
  GradientEvaluation<Scalar> ev{loss.value, net.zero_gradients()};
  net.backward(tape, loss.grad, &ev.grads);
  return ev;
}

// ------------------------------------------------------------------ optimizers

struct OptimizerConfig {
  std::string kind = "adam";  // or "sgd"
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(std::move(cfg)) {
    if (cfg_.kind != "adam" && cfg_.kind != "sgd") throw std::invalid_argument("unknown optimizer " + cfg_.kind);
    if (!(cfg_.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  }

  const OptimizerConfig& config() const { return cfg_; }

  void step(Network<Scalar>& net, const Gradients<Scalar>& grads) {
    auto& layers = net.mutable_layers();
    if (cfg_.kind == "adam" && m_w_.empty()) {
      for (const auto& l : layers) {
        m_w_.push_back(Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()));
        v_w_.push_back(m_w_.back());
        m_b_.push_back(Vector<Scalar>::Zero(l.bias.size()));
        v_b_.push_back(m_b_.back());
      }
    }
    ++t_;
    const Scalar lr = Scalar(cfg_.learning_rate);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      auto& l = layers[i];
      if (cfg_.kind == "sgd") {
        l.weight -= lr * grads.weight[i];
        l.bias -= lr * grads.bias[i];
      } else {
        adam_update(l.weight, grads.weight[i], m_w_[i], v_w_[i]);
        adam_update(l.bias, grads.bias[i], m_b_[i], v_b_[i]);
      }
      if (l.connectivity.size() != 0) l.weight = l.weight.cwiseProduct(l.connectivity);
    }
    if (!net.all_finite()) throw TrainingDivergence("non-finite parameters after optimizer step");
  }

 private:
  template <typename P, typename G>
  void adam_update(P& param, const G& grad, P& m, P& v) {
    const Scalar b1 = Scalar(cfg_.beta1);
    const Scalar b2 = Scalar(cfg_.beta2);
    m = b1 * m + (Scalar(1) - b1) * grad;
    v = b2 * v + (Scalar(1) - b2) * grad.cwiseAbs2();
    const Scalar c1 = Scalar(1) - std::pow(b1, Scalar(t_));
    const Scalar c2 = Scalar(1) - std::pow(b2, Scalar(t_));
    param.array() -= Scalar(cfg_.learning_rate) * (m.array() / c1) /
                     ((v.array() / c2).sqrt() + Scalar(cfg_.epsilon));
  }

  OptimizerConfig cfg_;
  long long t_ = 0;
  std::vector<Matrix<Scalar>> m_w_, v_w_;
  std::vector<Vector<Scalar>> m_b_, v_b_;
};

}  // namespace rsscm::nn
