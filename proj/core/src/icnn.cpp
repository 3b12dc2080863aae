#include "icnn_impl.hpp"

#include <cmath>
#include <sstream>

namespace w2r::icnn {

namespace {

double softplus(double z) {
  // log(1 + e^z) without overflow for large z.
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

template <class M>
void activate(Activation act, const M& z, M& h) {
  h.resize(z.rows(), z.cols());
  switch (act) {
    case Activation::relu:
      h = z.cwiseMax(0.0);
      break;
    case Activation::relu_squared:
      h = z.cwiseMax(0.0).array().square().matrix();
      break;
    case Activation::softplus:
      h = z.unaryExpr([](double v) { return softplus(v); });
      break;
    case Activation::linear:
      h = z;
      break;
  }
}

// Multiplies `delta` in place by σ'(z). relu' is taken as 0 at the kink.
template <class M>
void scale_by_derivative(Activation act, const M& z, M& delta) {
  switch (act) {
    case Activation::relu:
      delta = (z.array() > 0.0).select(delta, 0.0);
      break;
    case Activation::relu_squared:
      delta.array() *= 2.0 * z.array().max(0.0);
      break;
    case Activation::softplus:
      delta.array() *= z.unaryExpr([](double v) { return logistic(v); }).array();
      break;
    case Activation::linear:
      break;
  }
}

std::vector<Index> layer_offsets(const Icnn& net) {
  std::vector<Index> offsets(net.layers.size());
  Index off = 0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    offsets[l] = off;
    const IcnnLayer& layer = net.layers[l];
    off += layer.w.size() + layer.a.size() + layer.b.size();
  }
  return offsets;
}

// Column-batched forward pass; z[ℓ] and h[ℓ+1] are width × B.
struct BatchTape {
  std::vector<Matrix> z;
  std::vector<Matrix> h;
};

void forward_batch(const Icnn& net, const Matrix& xs, BatchTape& tape) {
  tape.z.resize(net.layers.size());
  tape.h.resize(net.layers.size() + 1);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const IcnnLayer& layer = net.layers[l];
    Matrix& z = tape.z[l];
    z.noalias() = layer.a * xs;
    z.colwise() += layer.b;
    if (l > 0) z.noalias() += layer.w * tape.h[l];
    activate(layer.activation, z, tape.h[l + 1]);
  }
}

}  // namespace

void value_and_gradient_batch(const Icnn& net, const Matrix& xs, Vector& values, Matrix& grads) {
  BatchTape tape;
  forward_batch(net, xs, tape);
  values = tape.h.back().row(0).transpose() + 0.5 * net.eta * xs.colwise().squaredNorm().transpose();
  grads = net.eta * xs;
  Matrix delta = Matrix::Ones(1, xs.cols());
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const IcnnLayer& layer = net.layers[l];
    scale_by_derivative(layer.activation, tape.z[l], delta);
    grads.noalias() += layer.a.transpose() * delta;
    if (l == 0) break;
    Matrix prev = layer.w.transpose() * delta;
    delta = std::move(prev);
  }
}

void accumulate_param_gradient_batch(const Icnn& net, const Matrix& xs, const Vector& weights, double* flat) {
  BatchTape tape;
  forward_batch(net, xs, tape);
  const std::vector<Index> offsets = layer_offsets(net);

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Matrix delta = weights.transpose();
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const IcnnLayer& layer = net.layers[l];
    scale_by_derivative(layer.activation, tape.z[l], delta);
    double* p = flat + offsets[l];
    if (layer.w.size() > 0) {
      Eigen::Map<RowMajor> gw(p, layer.w.rows(), layer.w.cols());
      gw.noalias() += delta * tape.h[l].transpose();
    }
    p += layer.w.size();
    Eigen::Map<RowMajor> ga(p, layer.a.rows(), layer.a.cols());
    ga.noalias() += delta * xs.transpose();
    p += layer.a.size();
    Eigen::Map<Vector> gb(p, layer.b.size());
    gb += delta.rowwise().sum();
    if (l == 0) break;
    Matrix prev = layer.w.transpose() * delta;
    delta = std::move(prev);
  }
}

double forward(const Icnn& net, const Vector& x, Tape* tape) {
  Vector h;
  Vector z;
  if (tape) {
    tape->z.resize(net.layers.size());
    tape->h.resize(net.layers.size() + 1);
    tape->h[0].resize(0);
  }
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const IcnnLayer& layer = net.layers[l];
    z.noalias() = layer.a * x;
    z += layer.b;
    if (l > 0) z.noalias() += layer.w * h;
    Vector next;
    activate(layer.activation, z, next);
    if (tape) {
      tape->z[l] = z;
      tape->h[l + 1] = next;
    }
    h = std::move(next);
  }
  return h(0) + 0.5 * net.eta * x.squaredNorm();
}

double value_and_gradient(const Icnn& net, const Vector& x, Vector& grad) {
  Tape tape;
  const double value = forward(net, x, &tape);
  grad = net.eta * x;
  Vector delta = Vector::Ones(1);
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const IcnnLayer& layer = net.layers[l];
    scale_by_derivative(layer.activation, tape.z[l], delta);
    grad.noalias() += layer.a.transpose() * delta;
    if (l == 0) break;
    Vector prev = layer.w.transpose() * delta;
    delta = std::move(prev);
  }
  return value;
}

void accumulate_param_gradient(const Icnn& net, const Vector& x, double weight, double* flat) {
  Tape tape;
  forward(net, x, &tape);

  const std::vector<Index> offsets = layer_offsets(net);

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Vector delta = Vector::Constant(1, weight);
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const IcnnLayer& layer = net.layers[l];
    scale_by_derivative(layer.activation, tape.z[l], delta);
    double* p = flat + offsets[l];
    if (layer.w.size() > 0) {
      Eigen::Map<RowMajor> gw(p, layer.w.rows(), layer.w.cols());
      gw.noalias() += delta * tape.h[l].transpose();
    }
    p += layer.w.size();
    Eigen::Map<RowMajor> ga(p, layer.a.rows(), layer.a.cols());
    ga.noalias() += delta * x.transpose();
    p += layer.a.size();
    Eigen::Map<Vector> gb(p, layer.b.size());
    gb += delta;
    if (l == 0) break;
    Vector prev = layer.w.transpose() * delta;
    delta = std::move(prev);
  }
}

Index param_count(const Icnn& net) {
  Index n = 0;
  for (const auto& layer : net.layers) n += layer.w.size() + layer.a.size() + layer.b.size();
  return n;
}

void validate(const Icnn& net) {
  auto fail = [](std::size_t l, const std::string& what) {
    std::ostringstream msg;
    msg << "Icnn layer " << l << ": " << what;
    throw ValidationError(msg.str());
  };
  if (net.layers.empty()) throw ValidationError("Icnn: no layers");
  if (!(net.eta >= 0.0) || !std::isfinite(net.eta)) throw ValidationError("Icnn: eta must be finite and >= 0");
  const Index d = net.layers.front().a.cols();
  if (d < 1) throw ValidationError("Icnn: input dimension must be positive");
  Index prev_width = 0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const IcnnLayer& layer = net.layers[l];
    const Index width = layer.b.size();
    if (width < 1) fail(l, "empty layer");
    if (layer.a.rows() != width || layer.a.cols() != d) fail(l, "input weights have the wrong shape");
    if (layer.w.rows() != width || layer.w.cols() != prev_width)
      fail(l, l == 0 ? "first layer must not have hidden weights" : "hidden weights have the wrong shape");
    if (!layer.w.allFinite() || !layer.a.allFinite() || !layer.b.allFinite()) fail(l, "non-finite parameter");
    if (layer.w.size() > 0 && layer.w.minCoeff() < 0.0) fail(l, "hidden weights must be nonnegative");
    prev_width = width;
  }
  if (prev_width != 1) throw ValidationError("Icnn: final layer must have exactly one unit");
}

}  // namespace w2r::icnn
