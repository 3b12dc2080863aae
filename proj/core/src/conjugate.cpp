#include "w2r/conjugate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace w2r {

void ConjugateConfig::validate() const {
  if (max_iter < 1) throw ValidationError("ConjugateConfig: max_iter must be >= 1");
  if (!(grad_tol > 0.0)) throw ValidationError("ConjugateConfig: grad_tol must be positive");
  if (!(step_init > 0.0)) throw ValidationError("ConjugateConfig: step_init must be positive");
  if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0))
    throw ValidationError("ConjugateConfig: backtrack_factor must lie in (0, 1)");
  if (!(armijo_c > 0.0)) throw ValidationError("ConjugateConfig: armijo_c must be positive");
  if (search_box) search_box->validate();
}

namespace {

constexpr double kMinStep = 1e-16;
constexpr double kMaxStep = 1e8;

[[noreturn]] void diverged(const Potential& f, const Vector& y) {
  std::ostringstream msg;
  msg << "conjugate_argmax diverged for class '" << class_tag(f.params()) << "' at y = ["
      << y.transpose().format(Eigen::IOFormat(Eigen::StreamPrecision, Eigen::DontAlignCols, ", ", ", ")) << "]";
  throw DivergenceError(msg.str());
}

// Upper bound on lanes evaluated together; keeps the per-layer activations small.
constexpr Index kMaxLanes = 256;

// State of one ascent problem max_x ⟨y, x⟩ − f(x).
struct Lane {
  Vector y, x, grad_f, g;
  double phi = 0.0;
  double step = 0.0;  // trial step of the next iteration
  double t = 0.0;     // step currently being tried
  int iters = 0;
  bool done = false;
  bool converged = false;
};

// Runs every lane to termination. Each lane follows exactly the scalar
// iteration; lanes only share the potential evaluations, which are batched.
void ascend(const Potential& f, std::vector<Lane>& lanes, const ConjugateConfig& config, const Box* box) {
  auto project = [&](const Vector& v) -> Vector { return box ? box->clamp(v) : v; };
  const Index d = f.dim();

  auto check_stop = [&](Lane& lane) {
    if (lane.g.norm() <= config.grad_tol) {
      lane.converged = lane.done = true;
    } else if (box && (project(lane.x + lane.g) - lane.x).norm() <= config.grad_tol) {
      lane.done = true;  // box binds
    } else if (lane.iters >= config.max_iter) {
      lane.done = true;
    }
    lane.t = lane.step;
  };

  Matrix xs(d, static_cast<Index>(lanes.size()));
  for (std::size_t k = 0; k < lanes.size(); ++k) xs.col(static_cast<Index>(k)) = lanes[k].x;
  Vector values;
  Matrix grads;
  f.value_and_gradient_batch(xs, values, grads);
  for (std::size_t k = 0; k < lanes.size(); ++k) {
    Lane& lane = lanes[k];
    lane.grad_f = grads.col(static_cast<Index>(k));
    lane.phi = lane.y.dot(lane.x) - values(static_cast<Index>(k));
    lane.g = lane.y - lane.grad_f;
    if (!std::isfinite(lane.phi) || !lane.g.allFinite()) diverged(f, lane.y);
    lane.step = config.step_init;
    check_stop(lane);
  }

  std::vector<std::size_t> active;
  for (;;) {
    active.clear();
    for (std::size_t k = 0; k < lanes.size(); ++k)
      if (!lanes[k].done) active.push_back(k);
    if (active.empty()) break;

    xs.resize(d, static_cast<Index>(active.size()));
    for (std::size_t a = 0; a < active.size(); ++a) {
      const Lane& lane = lanes[active[a]];
      xs.col(static_cast<Index>(a)) = project(lane.x + lane.t * lane.g);
    }
    f.value_and_gradient_batch(xs, values, grads);

    for (std::size_t a = 0; a < active.size(); ++a) {
      Lane& lane = lanes[active[a]];
      const Index col = static_cast<Index>(a);
      const double phi_new = lane.y.dot(xs.col(col)) - values(col);
      bool accepted = false;
      if (std::isfinite(phi_new)) {
        const Vector s = xs.col(col) - lane.x;
        if (phi_new >= lane.phi + config.armijo_c * lane.g.dot(s)) {
          accepted = true;
        } else if (phi_new >= lane.phi && (lane.y - grads.col(col)).norm() < lane.g.norm()) {
          // Near the maximizer the Armijo increase drops below the rounding
          // error of φ; a non-decreasing step that shrinks the gradient is
          // still progress.
          accepted = true;
        }
        if (accepted) {
          const Vector dgrad = grads.col(col) - lane.grad_f;
          const double curvature = s.dot(dgrad);
          lane.step = curvature > 0.0 ? std::clamp(s.squaredNorm() / curvature, kMinStep, kMaxStep)
                                      : std::min(lane.t / config.backtrack_factor, kMaxStep);
          lane.x = xs.col(col);
          lane.grad_f = grads.col(col);
          lane.phi = phi_new;
          lane.g = lane.y - lane.grad_f;
          if (!lane.g.allFinite() || !lane.x.allFinite()) diverged(f, lane.y);
          ++lane.iters;
          check_stop(lane);
        }
      }
      if (!accepted) {
        lane.t *= config.backtrack_factor;
        // No ascent possible at machine precision (kink or flat maximum).
        if (lane.t < kMinStep) lane.done = true;
      }
    }
  }
}

// Euclidean projection onto the probability simplex.
Vector project_simplex(const Vector& v) {
  Vector u = v;
  std::sort(u.data(), u.data() + u.size(), std::greater<>());
  double cumsum = 0.0, tau = 0.0;
  for (Index k = 0; k < u.size(); ++k) {
    cumsum += u(k);
    const double t = (cumsum - 1.0) / static_cast<double>(k + 1);
    if (u(k) - t > 0.0) tau = t;
  }
  return (v.array() - tau).cwiseMax(0.0);
}

// Gradient ascent stalls where pieces of a max of quadratics cross, so the
// conjugate is computed from its dual instead:
//   f*(y) = min over the simplex of g(λ) = (Σ λ_m q_m)*(y),
// with x(λ) = A(λ)⁻¹(y − b(λ)) and ∂g/∂λ_m = −q_m(x(λ)). The duality gap
// g(λ) − (⟨y, x(λ)⟩ − f(x(λ))) certifies the returned point.
class PlqDual {
 public:
  PlqDual(const Plq& p, const Vector& y) : p_(p), y_(y) {}

  struct Point {
    Vector lambda, x, grad;
    double g = 0.0;       // dual value, an upper bound on f*(y)
    double primal = 0.0;  // ⟨y, x⟩ − f(x), a lower bound
  };

  Point at(Vector lambda) const {
    const Index d = y_.size();
    Matrix a = Matrix::Zero(d, d);
    Vector b = Vector::Zero(d);
    double c = 0.0;
    for (std::size_t m = 0; m < p_.pieces.size(); ++m) {
      const double w = lambda(static_cast<Index>(m));
      if (w == 0.0) continue;
      a.noalias() += w * p_.pieces[m].a;
      b.noalias() += w * p_.pieces[m].b;
      c += w * p_.pieces[m].c;
    }
    Point pt;
    const Vector r = y_ - b;
    pt.x = a.llt().solve(r);
    pt.g = 0.5 * r.dot(pt.x) - c;
    pt.grad.resize(static_cast<Index>(p_.pieces.size()));
    double f = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < p_.pieces.size(); ++m) {
      const PlqPiece& q = p_.pieces[m];
      const double qm = 0.5 * pt.x.dot(q.a * pt.x) + q.b.dot(pt.x) + q.c;
      pt.grad(static_cast<Index>(m)) = -qm;
      f = std::max(f, qm);
    }
    pt.primal = y_.dot(pt.x) - f;
    pt.lambda = std::move(lambda);
    return pt;
  }

 private:
  const Plq& p_;
  const Vector& y_;
};

ConjugateResult plq_conjugate(const Plq& p, const Vector& y, const ConjugateConfig& config) {
  const PlqDual dual(p, y);
  const Index m = static_cast<Index>(p.pieces.size());
  PlqDual::Point cur = dual.at(Vector::Constant(m, 1.0 / static_cast<double>(m)));
  double step = config.step_init;
  int iters = 0;
  auto gap_ok = [&](const PlqDual::Point& pt) {
    return pt.g - pt.primal <= 1e-3 * config.grad_tol * std::max(1.0, std::abs(pt.g));
  };
  while (!gap_ok(cur) && iters < config.max_iter) {
    double t = step;
    bool moved = false;
    while (t >= kMinStep) {
      PlqDual::Point next = dual.at(project_simplex(cur.lambda - t * cur.grad));
      const Vector s = next.lambda - cur.lambda;
      if (s.squaredNorm() == 0.0) break;
      if (std::isfinite(next.g) && next.g <= cur.g + cur.grad.dot(s) + s.squaredNorm() / (2.0 * t)) {
        const double curvature = s.dot(next.grad - cur.grad);
        step = curvature > 0.0 ? std::clamp(s.squaredNorm() / curvature, kMinStep, kMaxStep) : t / config.backtrack_factor;
        cur = std::move(next);
        moved = true;
        break;
      }
      t *= config.backtrack_factor;
    }
    if (!moved) break;
    ++iters;
  }
  if (!std::isfinite(cur.primal) || !cur.x.allFinite())
    throw DivergenceError("conjugate_argmax diverged for class 'plq'");
  return {std::move(cur.x), cur.primal, iters, gap_ok(cur)};
}

// Solves for the columns `cols` of `ys` (d × n, one problem per column).
std::vector<ConjugateResult> solve_columns(const Potential& f, const Matrix& ys,
                                           const std::vector<const Vector*>& starts, const ConjugateConfig& config) {
  const Index n = ys.cols();
  std::vector<ConjugateResult> out(static_cast<std::size_t>(n));
  if (n == 0) return out;
  if (ys.rows() != f.dim()) throw ValidationError("conjugate_argmax: y has the wrong dimension");

  if (config.use_closed_form && conjugate_closed_form(f.params(), ys.col(0))) {
    for (Index k = 0; k < n; ++k) {
      auto cf = conjugate_closed_form(f.params(), ys.col(k));
      out[static_cast<std::size_t>(k)] = {std::move(cf->argmax), cf->value, 0, true};
    }
    return out;
  }
  if (config.use_closed_form && std::holds_alternative<Plq>(f.params())) {
    const Plq& p = std::get<Plq>(f.params());
    for (Index k = 0; k < n; ++k) out[static_cast<std::size_t>(k)] = plq_conjugate(p, ys.col(k), config);
    return out;
  }

  const Box* box = config.search_box ? &*config.search_box : nullptr;
  if (box && box->dim() != ys.rows()) throw ValidationError("conjugate_argmax: search box has the wrong dimension");
  if (!box && !(strong_convexity_modulus(f.params()) > 0.0))
    throw ValidationError("conjugate_argmax: a search box is required for potentials that are not strongly convex");

  std::vector<Lane> lanes;
  for (Index first = 0; first < n; first += kMaxLanes) {
    const Index count = std::min(kMaxLanes, n - first);
    lanes.assign(static_cast<std::size_t>(count), Lane{});
    for (Index k = 0; k < count; ++k) {
      Lane& lane = lanes[static_cast<std::size_t>(k)];
      lane.y = ys.col(first + k);
      const Vector* start = starts.empty() ? nullptr : starts[static_cast<std::size_t>(first + k)];
      const Vector& x0 = start && start->size() == lane.y.size() ? *start : lane.y;
      lane.x = box ? box->clamp(x0) : x0;
    }
    ascend(f, lanes, config, box);
    for (Index k = 0; k < count; ++k) {
      Lane& lane = lanes[static_cast<std::size_t>(k)];
      out[static_cast<std::size_t>(first + k)] = {std::move(lane.x), lane.phi, lane.iters, lane.converged};
    }
  }
  return out;
}

}  // namespace

ConjugateResult conjugate_argmax(const Potential& f, const Vector& y, const ConjugateConfig& config,
                                 const Vector* start) {
  if (y.size() != f.dim()) throw ValidationError("conjugate_argmax: y has the wrong dimension");
  return std::move(solve_columns(f, y, {start}, config).front());
}

ConjugateResult conjugate_argmax(const PotentialParams& theta, const Vector& y, const ConjugateConfig& config) {
  config.validate();
  return conjugate_argmax(Potential(theta), y, config, nullptr);
}

ConjugateResult conjugate_argmax(const PotentialParams& theta, const Vector& y, const ConjugateConfig& config,
                                 const Vector& start) {
  config.validate();
  return conjugate_argmax(Potential(theta), y, config, &start);
}

const Vector* WarmStartCache::find(Index sample) const {
  const auto it = points_.find(sample);
  return it == points_.end() ? nullptr : &it->second;
}

void WarmStartCache::store(Index sample, Vector x) {
  if (!x.allFinite()) throw ValidationError("WarmStartCache: refusing to store a non-finite point");
  points_[sample] = std::move(x);
}

std::vector<ConjugateResult> conjugate_batch(const Potential& f, const Matrix& ys, const std::vector<Index>& indices,
                                             const ConjugateConfig& config, WarmStartCache* cache) {
  Matrix cols(f.dim(), static_cast<Index>(indices.size()));
  std::vector<const Vector*> starts(indices.size(), nullptr);
  if (ys.cols() != f.dim()) throw ValidationError("conjugate_batch: y has the wrong dimension");
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Index i = indices[k];
    if (i < 0 || i >= ys.rows()) throw ValidationError("conjugate_batch: sample index out of range");
    cols.col(static_cast<Index>(k)) = ys.row(i).transpose();
    if (cache) starts[k] = cache->find(i);
  }
  std::vector<ConjugateResult> results = solve_columns(f, cols, starts, config);
  if (cache) {
    std::vector<std::size_t> order(indices.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return indices[a] < indices[b]; });
    for (const std::size_t k : order) cache->store(indices[k], results[k].x_hat);
  }
  return results;
}

double fenchel_gap(const PotentialParams& theta, const Vector& x, const Vector& y, const ConjugateConfig& config) {
  config.validate();
  const Potential f(theta);
  const ConjugateResult r = conjugate_argmax(f, y, config, nullptr);
  return f.value(x) + r.value - x.dot(y);
}

}  // namespace w2r
