#include "w2r/potentials.hpp"

#include "icnn_impl.hpp"
#include "w2r/linalg.hpp"
#include "w2r/rng.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <sstream>

namespace w2r {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Relative slack for feasibility checks so that freshly projected values pass.
constexpr double kFeasTol = 1e-9;

bool spd_at_least(const Matrix& a, double eps) {
  if (a.rows() != a.cols() || a.rows() == 0 || !a.allFinite()) return false;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if (!linalg::is_symmetric(a, 1e-12 * scale)) return false;
  return linalg::min_eigenvalue(a) >= eps * (1.0 - kFeasTol) - 1e-15 * scale;
}

double quad_value(const Matrix& a, const Vector& b, double c, const Vector& x) {
  return 0.5 * x.dot(a * x) + b.dot(x) + c;
}

// Index of the first piece attaining the max.
std::size_t active_piece(const Plq& p, const Vector& x, double* value) {
  std::size_t best = 0;
  double best_v = quad_value(p.pieces[0].a, p.pieces[0].b, p.pieces[0].c, x);
  for (std::size_t m = 1; m < p.pieces.size(); ++m) {
    const double v = quad_value(p.pieces[m].a, p.pieces[m].b, p.pieces[m].c, x);
    if (v > best_v) {
      best_v = v;
      best = m;
    }
  }
  if (value) *value = best_v;
  return best;
}

double basis_value(const BasisFunction& f, const Vector& x) {
  return std::visit(overloaded{
                        [&](const Quadratic& q) { return quad_value(q.a, q.b, 0.0, x); },
                        [&](const Plq& p) {
                          double v;
                          active_piece(p, x, &v);
                          return v;
                        },
                    },
                    f);
}

Vector basis_gradient(const BasisFunction& f, const Vector& x) {
  return std::visit(overloaded{
                        [&](const Quadratic& q) -> Vector { return q.a * x + q.b; },
                        [&](const Plq& p) -> Vector {
                          const auto& piece = p.pieces[active_piece(p, x, nullptr)];
                          return piece.a * x + piece.b;
                        },
                    },
                    f);
}

Index basis_dim(const BasisFunction& f) {
  return std::visit(overloaded{
                        [](const Quadratic& q) { return q.b.size(); },
                        [](const Plq& p) { return p.pieces.empty() ? Index{0} : p.pieces[0].b.size(); },
                    },
                    f);
}

void validate_quadratic(const Quadratic& q, const char* who) {
  const Index d = q.b.size();
  if (d < 1 || q.a.rows() != d || q.a.cols() != d)
    throw ValidationError(std::string(who) + ": a must be d x d and b of length d");
  if (!q.b.allFinite()) throw ValidationError(std::string(who) + ": non-finite b");
  if (!(q.eps_spd > 0.0)) throw ValidationError(std::string(who) + ": eps_spd must be positive");
  if (!spd_at_least(q.a, q.eps_spd))
    throw ValidationError(std::string(who) + ": a must be symmetric with eigenvalues >= eps_spd");
}

void validate_plq(const Plq& p, const char* who) {
  if (p.pieces.empty()) throw ValidationError(std::string(who) + ": no pieces");
  if (!(p.eps_spd > 0.0)) throw ValidationError(std::string(who) + ": eps_spd must be positive");
  const Index d = p.pieces[0].b.size();
  for (std::size_t m = 0; m < p.pieces.size(); ++m) {
    const auto& piece = p.pieces[m];
    std::ostringstream tag;
    tag << who << " piece " << m;
    if (d < 1 || piece.b.size() != d || piece.a.rows() != d || piece.a.cols() != d)
      throw ValidationError(tag.str() + ": inconsistent shapes");
    if (!piece.b.allFinite() || !std::isfinite(piece.c)) throw ValidationError(tag.str() + ": non-finite entries");
    if (!spd_at_least(piece.a, p.eps_spd))
      throw ValidationError(tag.str() + ": a must be symmetric with eigenvalues >= eps_spd");
  }
}

void validate_basis(const BasisFunction& f) {
  std::visit(overloaded{
                 [](const Quadratic& q) { validate_quadratic(q, "ConeCombo basis"); },
                 [](const Plq& p) { validate_plq(p, "ConeCombo basis"); },
             },
             f);
}

void append_matrix(const Matrix& m, Vector& out, Index& pos) {
  Eigen::Map<RowMajor>(out.data() + pos, m.rows(), m.cols()) = m;
  pos += m.size();
}

void append_vector(const Vector& v, Vector& out, Index& pos) {
  out.segment(pos, v.size()) = v;
  pos += v.size();
}

void read_matrix(Matrix& m, const Vector& in, Index& pos) {
  m = Eigen::Map<const RowMajor>(in.data() + pos, m.rows(), m.cols());
  pos += m.size();
}

void read_vector(Vector& v, const Vector& in, Index& pos) {
  v = in.segment(pos, v.size());
  pos += v.size();
}

}  // namespace

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::relu:
      return "relu";
    case Activation::relu_squared:
      return "relu_squared";
    case Activation::softplus:
      return "softplus";
    case Activation::linear:
      return "linear";
  }
  return "unknown";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "relu_squared") return Activation::relu_squared;
  if (name == "softplus") return Activation::softplus;
  if (name == "linear") return Activation::linear;
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

std::string_view class_tag(const PotentialParams& theta) {
  return std::visit(overloaded{
                        [](const Quadratic&) { return std::string_view("quadratic"); },
                        [](const BallLinear&) { return std::string_view("ball_linear"); },
                        [](const ConeCombo&) { return std::string_view("cone_combo"); },
                        [](const Plq&) { return std::string_view("plq"); },
                        [](const Icnn&) { return std::string_view("icnn"); },
                    },
                    theta);
}

Index input_dim(const PotentialParams& theta) {
  return std::visit(overloaded{
                        [](const Quadratic& q) { return q.b.size(); },
                        [](const BallLinear& l) { return l.w.size(); },
                        [](const ConeCombo& c) { return c.basis.empty() ? Index{0} : basis_dim(c.basis[0]); },
                        [](const Plq& p) { return p.pieces.empty() ? Index{0} : p.pieces[0].b.size(); },
                        [](const Icnn& n) { return n.layers.empty() ? Index{0} : n.layers[0].a.cols(); },
                    },
                    theta);
}

Vector flatten(const PotentialParams& theta) {
  Vector out(param_count(theta));
  Index pos = 0;
  std::visit(overloaded{
                 [&](const Quadratic& q) {
                   append_matrix(q.a, out, pos);
                   append_vector(q.b, out, pos);
                 },
                 [&](const BallLinear& l) { append_vector(l.w, out, pos); },
                 [&](const ConeCombo& c) { append_vector(c.alphas, out, pos); },
                 [&](const Plq& p) {
                   for (const auto& piece : p.pieces) {
                     append_matrix(piece.a, out, pos);
                     append_vector(piece.b, out, pos);
                     out(pos++) = piece.c;
                   }
                 },
                 [&](const Icnn& n) {
                   for (const auto& layer : n.layers) {
                     append_matrix(layer.w, out, pos);
                     append_matrix(layer.a, out, pos);
                     append_vector(layer.b, out, pos);
                   }
                 },
             },
             theta);
  return out;
}

PotentialParams unflatten(const PotentialParams& like, const Vector& flat) {
  if (flat.size() != param_count(like)) throw ValidationError("unflatten: parameter vector has the wrong length");
  PotentialParams out = like;
  Index pos = 0;
  std::visit(overloaded{
                 [&](Quadratic& q) {
                   read_matrix(q.a, flat, pos);
                   read_vector(q.b, flat, pos);
                 },
                 [&](BallLinear& l) { read_vector(l.w, flat, pos); },
                 [&](ConeCombo& c) { read_vector(c.alphas, flat, pos); },
                 [&](Plq& p) {
                   for (auto& piece : p.pieces) {
                     read_matrix(piece.a, flat, pos);
                     read_vector(piece.b, flat, pos);
                     piece.c = flat(pos++);
                   }
                 },
                 [&](Icnn& n) {
                   for (auto& layer : n.layers) {
                     read_matrix(layer.w, flat, pos);
                     read_matrix(layer.a, flat, pos);
                     read_vector(layer.b, flat, pos);
                   }
                 },
             },
             out);
  return out;
}

std::vector<ParamBlock> param_blocks(const PotentialParams& theta) {
  std::vector<ParamBlock> blocks;
  Index pos = 0;
  auto add = [&](std::string name, Index size) {
    if (size == 0) return;
    blocks.push_back({std::move(name), pos, size});
    pos += size;
  };
  std::visit(overloaded{
                 [&](const Quadratic& q) {
                   add("a", q.a.size());
                   add("b", q.b.size());
                 },
                 [&](const BallLinear& l) { add("w", l.w.size()); },
                 [&](const ConeCombo& c) { add("alphas", c.alphas.size()); },
                 [&](const Plq& p) {
                   for (std::size_t m = 0; m < p.pieces.size(); ++m) {
                     const std::string prefix = "piece" + std::to_string(m) + ".";
                     add(prefix + "a", p.pieces[m].a.size());
                     add(prefix + "b", p.pieces[m].b.size());
                     add(prefix + "c", 1);
                   }
                 },
                 [&](const Icnn& n) {
                   for (std::size_t l = 0; l < n.layers.size(); ++l) {
                     const std::string prefix = "layer" + std::to_string(l) + ".";
                     add(prefix + "w", n.layers[l].w.size());
                     add(prefix + "a", n.layers[l].a.size());
                     add(prefix + "b", n.layers[l].b.size());
                   }
                 },
             },
             theta);
  return blocks;
}

Index param_count(const PotentialParams& theta) {
  return std::visit(overloaded{
                        [](const Quadratic& q) { return q.a.size() + q.b.size(); },
                        [](const BallLinear& l) { return l.w.size(); },
                        [](const ConeCombo& c) { return c.alphas.size(); },
                        [](const Plq& p) {
                          Index n = 0;
                          for (const auto& piece : p.pieces) n += piece.a.size() + piece.b.size() + 1;
                          return n;
                        },
                        [](const Icnn& n) { return icnn::param_count(n); },
                    },
                    theta);
}

void validate_feasible(const PotentialParams& theta) {
  std::visit(overloaded{
                 [](const Quadratic& q) { validate_quadratic(q, "Quadratic"); },
                 [](const BallLinear& l) {
                   if (l.w.size() < 1) throw ValidationError("BallLinear: empty w");
                   if (!(l.radius > 0.0) || !std::isfinite(l.radius))
                     throw ValidationError("BallLinear: radius must be positive");
                   if (!l.w.allFinite()) throw ValidationError("BallLinear: non-finite w");
                   if (l.w.norm() > l.radius * (1.0 + kFeasTol))
                     throw ValidationError("BallLinear: |w| exceeds the radius");
                 },
                 [](const ConeCombo& c) {
                   if (c.basis.empty()) throw ValidationError("ConeCombo: empty basis");
                   if (c.alphas.size() != static_cast<Index>(c.basis.size()))
                     throw ValidationError("ConeCombo: one alpha per basis function required");
                   if (!c.alphas.allFinite() || c.alphas.minCoeff() < 0.0)
                     throw ValidationError("ConeCombo: alphas must be finite and nonnegative");
                   const Index d = basis_dim(c.basis[0]);
                   for (const auto& f : c.basis) {
                     validate_basis(f);
                     if (basis_dim(f) != d) throw ValidationError("ConeCombo: basis dimensions differ");
                   }
                 },
                 [](const Plq& p) { validate_plq(p, "Plq"); },
                 [](const Icnn& n) { icnn::validate(n); },
             },
             theta);
}

bool is_feasible(const PotentialParams& theta) {
  try {
    validate_feasible(theta);
    return true;
  } catch (const ValidationError&) {
    return false;
  }
}

Potential::Potential(const PotentialParams& theta) : theta_(&theta), dim_(input_dim(theta)) {
  validate_feasible(theta);
}

Potential::Potential(const PotentialParams& theta, NoCheck) : theta_(&theta), dim_(input_dim(theta)) {}

Potential Potential::unchecked(const PotentialParams& theta) { return Potential(theta, NoCheck{}); }

double Potential::value(const Vector& x) const {
  return std::visit(overloaded{
                        [&](const Quadratic& q) { return quad_value(q.a, q.b, 0.0, x); },
                        [&](const BallLinear& l) { return 0.5 * x.squaredNorm() + l.w.dot(x); },
                        [&](const ConeCombo& c) {
                          double v = 0.0;
                          for (std::size_t m = 0; m < c.basis.size(); ++m)
                            v += c.alphas(static_cast<Index>(m)) * basis_value(c.basis[m], x);
                          return v;
                        },
                        [&](const Plq& p) {
                          double v;
                          active_piece(p, x, &v);
                          return v;
                        },
                        [&](const Icnn& n) { return icnn::forward(n, x, nullptr); },
                    },
                    *theta_);
}

double Potential::value_and_gradient(const Vector& x, Vector& grad) const {
  return std::visit(overloaded{
                        [&](const Quadratic& q) {
                          grad = q.a * x;
                          const double v = 0.5 * x.dot(grad) + q.b.dot(x);
                          grad += q.b;
                          return v;
                        },
                        [&](const BallLinear& l) {
                          grad = x + l.w;
                          return 0.5 * x.squaredNorm() + l.w.dot(x);
                        },
                        [&](const ConeCombo& c) {
                          grad = Vector::Zero(x.size());
                          double v = 0.0;
                          for (std::size_t m = 0; m < c.basis.size(); ++m) {
                            const double alpha = c.alphas(static_cast<Index>(m));
                            v += alpha * basis_value(c.basis[m], x);
                            grad += alpha * basis_gradient(c.basis[m], x);
                          }
                          return v;
                        },
                        [&](const Plq& p) {
                          double v;
                          const auto& piece = p.pieces[active_piece(p, x, &v)];
                          grad = piece.a * x + piece.b;
                          return v;
                        },
                        [&](const Icnn& n) { return icnn::value_and_gradient(n, x, grad); },
                    },
                    *theta_);
}

Vector Potential::gradient(const Vector& x) const {
  Vector g;
  value_and_gradient(x, g);
  return g;
}

void Potential::accumulate_param_gradient(const Vector& x, double weight, Vector& flat) const {
  Index pos = 0;
  std::visit(overloaded{
                 [&](const Quadratic& q) {
                   const Index d = q.b.size();
                   Eigen::Map<RowMajor>(flat.data(), d, d).noalias() += (0.5 * weight) * x * x.transpose();
                   flat.segment(d * d, d) += weight * x;
                 },
                 [&](const BallLinear&) { flat += weight * x; },
                 [&](const ConeCombo& c) {
                   for (std::size_t m = 0; m < c.basis.size(); ++m)
                     flat(static_cast<Index>(m)) += weight * basis_value(c.basis[m], x);
                 },
                 [&](const Plq& p) {
                   const std::size_t active = active_piece(p, x, nullptr);
                   for (std::size_t m = 0; m < p.pieces.size(); ++m) {
                     const Index d = p.pieces[m].b.size();
                     if (m == active) {
                       Eigen::Map<RowMajor>(flat.data() + pos, d, d).noalias() += (0.5 * weight) * x * x.transpose();
                       flat.segment(pos + d * d, d) += weight * x;
                       flat(pos + d * d + d) += weight;
                     }
                     pos += d * d + d + 1;
                   }
                 },
                 [&](const Icnn& n) { icnn::accumulate_param_gradient(n, x, weight, flat.data()); },
             },
             *theta_);
}

void Potential::value_and_gradient_batch(const Matrix& xs, Vector& values, Matrix& grads) const {
  if (const auto* net = std::get_if<Icnn>(theta_)) {
    icnn::value_and_gradient_batch(*net, xs, values, grads);
    return;
  }
  values.resize(xs.cols());
  grads.resize(xs.rows(), xs.cols());
  Vector g;
  for (Index k = 0; k < xs.cols(); ++k) {
    values(k) = value_and_gradient(xs.col(k), g);
    grads.col(k) = g;
  }
}

void Potential::accumulate_param_gradient_batch(const Matrix& xs, const Vector& weights, Vector& flat) const {
  if (const auto* net = std::get_if<Icnn>(theta_)) {
    icnn::accumulate_param_gradient_batch(*net, xs, weights, flat.data());
    return;
  }
  for (Index k = 0; k < xs.cols(); ++k) accumulate_param_gradient(xs.col(k), weights(k), flat);
}

ParamGradient Potential::param_gradient(const Vector& x) const {
  ParamGradient g{Vector::Zero(param_count(*theta_)), param_blocks(*theta_)};
  accumulate_param_gradient(x, 1.0, g.flat);
  return g;
}

double eval(const PotentialParams& theta, const Vector& x) { return Potential(theta).value(x); }

Vector grad_x(const PotentialParams& theta, const Vector& x) { return Potential(theta).gradient(x); }

ParamGradient grad_params(const PotentialParams& theta, const Vector& x) {
  return Potential(theta).param_gradient(x);
}

PotentialParams project_feasible(const PotentialParams& theta) {
  return std::visit(overloaded{
                        [](const Quadratic& q) -> PotentialParams {
                          if (spd_at_least(q.a, q.eps_spd)) return q;
                          Quadratic out = q;
                          out.a = linalg::eigen_clamp(q.a, q.eps_spd);
                          return out;
                        },
                        [](const BallLinear& l) -> PotentialParams {
                          const double norm = l.w.norm();
                          if (norm <= l.radius) return l;
                          BallLinear out = l;
                          out.w *= l.radius / norm;
                          return out;
                        },
                        [](const ConeCombo& c) -> PotentialParams {
                          ConeCombo out = c;
                          out.alphas = c.alphas.cwiseMax(0.0);
                          return out;
                        },
                        [](const Plq& p) -> PotentialParams {
                          Plq out = p;
                          for (auto& piece : out.pieces)
                            if (!spd_at_least(piece.a, p.eps_spd)) piece.a = linalg::eigen_clamp(piece.a, p.eps_spd);
                          return out;
                        },
                        [](const Icnn& n) -> PotentialParams {
                          Icnn out = n;
                          for (auto& layer : out.layers)
                            if (layer.w.size() > 0) layer.w = layer.w.cwiseMax(0.0);
                          return out;
                        },
                    },
                    theta);
}

double convexity_probe(const PotentialParams& theta, std::uint64_t seed, Index trials, const Box& box) {
  if (trials < 1) throw ValidationError("convexity_probe: trials must be >= 1");
  box.validate();
  if (box.dim() != input_dim(theta)) throw ValidationError("convexity_probe: box dimension mismatch");
  const Potential f = Potential::unchecked(theta);
  Rng rng(seed, stream::kConvexityProbe);
  const Index d = box.dim();
  Vector x1(d), x2(d);
  double worst = -std::numeric_limits<double>::infinity();
  for (Index t = 0; t < trials; ++t) {
    for (Index k = 0; k < d; ++k) {
      x1(k) = rng.uniform(box.lo(k), box.hi(k));
      x2(k) = rng.uniform(box.lo(k), box.hi(k));
    }
    const double lambda = rng.uniform();
    const Vector mid = lambda * x1 + (1.0 - lambda) * x2;
    const double gap = f.value(mid) - lambda * f.value(x1) - (1.0 - lambda) * f.value(x2);
    worst = std::max(worst, gap);
  }
  return worst;
}

std::optional<ConjugatePoint> conjugate_closed_form(const PotentialParams& theta, const Vector& y) {
  if (const auto* q = std::get_if<Quadratic>(&theta)) {
    Eigen::LLT<Matrix> llt(q->a);
    if (llt.info() != Eigen::Success) throw ValidationError("Quadratic: a is not positive definite");
    const Vector r = y - q->b;
    Vector x = llt.solve(r);
    return ConjugatePoint{0.5 * r.dot(x), std::move(x)};
  }
  if (const auto* l = std::get_if<BallLinear>(&theta)) {
    Vector x = y - l->w;
    return ConjugatePoint{0.5 * x.squaredNorm(), std::move(x)};
  }
  return std::nullopt;
}

double strong_convexity_modulus(const PotentialParams& theta) {
  return std::visit(overloaded{
                        [](const Quadratic& q) { return linalg::min_eigenvalue(q.a); },
                        [](const BallLinear&) { return 1.0; },
                        [](const ConeCombo&) { return 0.0; },
                        [](const Plq& p) {
                          double m = std::numeric_limits<double>::infinity();
                          for (const auto& piece : p.pieces) m = std::min(m, linalg::min_eigenvalue(piece.a));
                          return m;
                        },
                        [](const Icnn& n) { return n.eta; },
                    },
                    theta);
}

Icnn make_identity_icnn(Index dim) {
  if (dim < 1) throw ValidationError("make_identity_icnn: dimension must be positive");
  IcnnLayer first;
  first.w = Matrix(2 * dim, 0);
  first.a.resize(2 * dim, dim);
  first.a << Matrix::Identity(dim, dim), -Matrix::Identity(dim, dim);
  first.b = Vector::Zero(2 * dim);
  first.activation = Activation::relu_squared;

  IcnnLayer out;
  out.w = Matrix::Constant(1, 2 * dim, 0.5);
  out.a = Matrix::Zero(1, dim);
  out.b = Vector::Zero(1);
  out.activation = Activation::linear;

  Icnn net;
  net.layers = {std::move(first), std::move(out)};
  return net;
}

}  // namespace w2r
