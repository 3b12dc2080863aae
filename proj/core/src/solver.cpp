#include "w2r/solver.hpp"

#include "w2r/linalg.hpp"
#include "w2r/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace w2r {

std::string_view to_string(PotentialClass c) {
  switch (c) {
    case PotentialClass::quadratic:
      return "quadratic";
    case PotentialClass::ball_linear:
      return "ball_linear";
    case PotentialClass::cone_combo:
      return "cone_combo";
    case PotentialClass::plq:
      return "plq";
    case PotentialClass::icnn:
      return "icnn";
  }
  return "unknown";
}

PotentialClass potential_class_from_string(std::string_view name) {
  if (name == "quadratic") return PotentialClass::quadratic;
  if (name == "ball_linear") return PotentialClass::ball_linear;
  if (name == "cone_combo") return PotentialClass::cone_combo;
  if (name == "plq") return PotentialClass::plq;
  if (name == "icnn") return PotentialClass::icnn;
  throw ValidationError("unknown potential class '" + std::string(name) + "'");
}

namespace {

Icnn init_icnn(const IcnnArchitecture& arch, Index d, Rng& rng) {
  if (arch.widths.empty()) throw ValidationError("IcnnArchitecture: at least one hidden layer required");
  if (arch.widths.front() < 2 * d)
    throw ValidationError("IcnnArchitecture: first hidden width must be >= 2 * dim to embed the identity potential");
  for (Index w : arch.widths)
    if (w < 1) throw ValidationError("IcnnArchitecture: widths must be positive");
  if (!(arch.eta >= 0.0)) throw ValidationError("IcnnArchitecture: eta must be >= 0");

  const Icnn identity = make_identity_icnn(d);
  Icnn net;
  net.eta = arch.eta;

  auto normal_matrix = [&](Index rows, Index cols, double sd) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = sd * rng.normal();
    return m;
  };
  auto uniform_matrix = [&](Index rows, Index cols, double hi) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(0.0, hi);
    return m;
  };
  const double input_sd = 1.0 / std::sqrt(static_cast<double>(d));

  // First layer: rows 0..2d-1 compute (±xᵢ)₊², the rest are random.
  IcnnLayer first;
  const Index n0 = arch.widths.front();
  first.w = Matrix(n0, 0);
  first.a = normal_matrix(n0, d, input_sd);
  first.a.topRows(2 * d) = identity.layers[0].a;
  first.b = normal_matrix(n0, 1, 0.1).col(0);
  first.b.head(2 * d).setZero();
  first.activation = arch.first_activation;
  net.layers.push_back(std::move(first));

  // Hidden layers: unit 0 carries ½‖x‖² forward, the rest are random.
  for (std::size_t l = 1; l < arch.widths.size(); ++l) {
    const Index n = arch.widths[l];
    const Index prev = arch.widths[l - 1];
    IcnnLayer layer;
    layer.w = uniform_matrix(n, prev, 2.0 / static_cast<double>(prev));
    layer.a = normal_matrix(n, d, input_sd);
    layer.b = normal_matrix(n, 1, 0.1).col(0);
    layer.w.row(0).setZero();
    if (l == 1)
      layer.w.row(0).head(2 * d).setConstant(0.5);
    else
      layer.w(0, 0) = 1.0;
    layer.a.row(0).setZero();
    layer.b(0) = 0.0;
    layer.activation = arch.hidden_activation;
    net.layers.push_back(std::move(layer));
  }

  IcnnLayer out;
  const Index last = arch.widths.back();
  out.w = uniform_matrix(1, last, 1e-3);
  if (arch.widths.size() == 1) {
    out.w.row(0).head(2 * d).setConstant(0.5);
  } else {
    out.w(0, 0) = 1.0;
  }
  out.a = Matrix::Zero(1, d);
  out.b = Vector::Zero(1);
  out.activation = Activation::linear;
  net.layers.push_back(std::move(out));
  return net;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

Box default_search_box(const SampleSet& a, const SampleSet& b) {
  if (a.dim() != b.dim()) throw ValidationError("default_search_box: dimension mismatch");
  const Vector lo = a.points().colwise().minCoeff().transpose().cwiseMin(b.points().colwise().minCoeff().transpose());
  const Vector hi = a.points().colwise().maxCoeff().transpose().cwiseMax(b.points().colwise().maxCoeff().transpose());
  const Vector pad = ((hi - lo) * 2.0).cwiseMax(1.0);
  return Box{lo - pad, hi + pad};
}

namespace {

void require_same_dim(const SampleSet& a, const SampleSet& b, const PotentialParams& theta) {
  if (a.dim() != b.dim()) throw ValidationError("sample sets have different dimensions");
  if (input_dim(theta) != a.dim()) throw ValidationError("potential dimension does not match the samples");
}

struct GradientStats {
  long long inner_iters = 0;
  long long nonconverged = 0;
};

// u = mean ∂f/∂θ(x) over x_rows − mean ∂f/∂θ(x̂) over y_rows.
Vector batch_gradient(const Potential& f, const Matrix& xs, const std::vector<Index>& x_rows, const Matrix& ys,
                      const std::vector<Index>& y_rows, const ConjugateConfig& inner, WarmStartCache* cache,
                      GradientStats* stats) {
  Vector u = Vector::Zero(param_count(f.params()));
  Matrix xb(f.dim(), static_cast<Index>(x_rows.size()));
  for (std::size_t k = 0; k < x_rows.size(); ++k) xb.col(static_cast<Index>(k)) = xs.row(x_rows[k]).transpose();
  f.accumulate_param_gradient_batch(xb, Vector::Constant(xb.cols(), 1.0 / static_cast<double>(x_rows.size())), u);

  const auto solves = conjugate_batch(f, ys, y_rows, inner, cache);
  Matrix xhat(f.dim(), static_cast<Index>(solves.size()));
  for (std::size_t k = 0; k < solves.size(); ++k) {
    xhat.col(static_cast<Index>(k)) = solves[k].x_hat;
    if (stats) {
      stats->inner_iters += solves[k].iters;
      stats->nonconverged += solves[k].converged ? 0 : 1;
    }
  }
  f.accumulate_param_gradient_batch(xhat, Vector::Constant(xhat.cols(), -1.0 / static_cast<double>(y_rows.size())), u);
  return u;
}

double objective_with_cache(const Potential& f, const SampleSet& s_mu, const SampleSet& s_nu,
                            const ConjugateConfig& inner, WarmStartCache* cache) {
  Vector values;
  Matrix grads;
  f.value_and_gradient_batch(s_mu.points().transpose(), values, grads);
  const double mu_term = values.sum();
  std::vector<Index> rows(static_cast<std::size_t>(s_nu.count()));
  std::iota(rows.begin(), rows.end(), Index{0});
  double nu_term = 0.0;
  for (const auto& r : conjugate_batch(f, s_nu.points(), rows, inner, cache)) nu_term += r.value;
  return mu_term / static_cast<double>(s_mu.count()) + nu_term / static_cast<double>(s_nu.count());
}

void shuffle(std::vector<Index>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

FitResult run_sgd(PotentialParams theta, const SampleSet& s_mu, const SampleSet& s_nu, const TrainConfig& config,
                  int epochs) {
  const auto start = std::chrono::steady_clock::now();
  require_same_dim(s_mu, s_nu, theta);
  validate_feasible(theta);

  ConjugateConfig inner = config.inner;
  if (config.search_box) inner.search_box = config.search_box;
  if (!inner.search_box && !(strong_convexity_modulus(theta) > 0.0)) inner.search_box = default_search_box(s_mu, s_nu);
  inner.validate();

  FitResult result;
  WarmStartCache cache;
  Rng rng(config.seed, stream::kBatches);
  std::vector<Index> perm_x(static_cast<std::size_t>(s_mu.count()));
  std::vector<Index> perm_y(static_cast<std::size_t>(s_nu.count()));
  std::iota(perm_x.begin(), perm_x.end(), Index{0});
  std::iota(perm_y.begin(), perm_y.end(), Index{0});
  const Index n_max = std::max(s_mu.count(), s_nu.count());

  double epoch_seconds = 0.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    const Index m = config.batch_at(epoch);
    const double eta = config.step.at(epoch);
    shuffle(perm_x, rng);
    shuffle(perm_y, rng);
    const Index steps = (n_max + m - 1) / m;
    double grad_norm_sum = 0.0;
    std::vector<Index> bx(static_cast<std::size_t>(m)), by(static_cast<std::size_t>(m));
    for (Index s = 0; s < steps; ++s) {
      for (Index k = 0; k < m; ++k) {
        bx[static_cast<std::size_t>(k)] = perm_x[static_cast<std::size_t>((s * m + k) % s_mu.count())];
        by[static_cast<std::size_t>(k)] = perm_y[static_cast<std::size_t>((s * m + k) % s_nu.count())];
      }
      GradientStats stats;
      const Potential f = Potential::unchecked(theta);
      Vector u = batch_gradient(f, s_mu.points(), bx, s_nu.points(), by, inner, &cache, &stats);
      result.inner_iteration_total += stats.inner_iters;
      result.inner_nonconverged += stats.nonconverged;
      grad_norm_sum += u.norm();
      Vector next = flatten(theta) - eta * u;
      if (!next.allFinite()) {
        std::ostringstream msg;
        msg << "fit diverged at epoch " << epoch << ": non-finite parameters";
        throw FitDivergenceError(msg.str(), theta, epoch);
      }
      theta = project_feasible(unflatten(theta, next));
    }
    epoch_seconds += seconds_since(epoch_start);

    const bool last = epoch + 1 == epochs;
    if (last || (config.eval_every > 0 && (epoch + 1) % config.eval_every == 0)) {
      const double objective = objective_with_cache(Potential::unchecked(theta), s_mu, s_nu, inner, &cache);
      if (!std::isfinite(objective)) {
        std::ostringstream msg;
        msg << "fit diverged at epoch " << epoch + 1 << ": objective is not finite";
        throw FitDivergenceError(msg.str(), theta, epoch);
      }
      result.history.push_back(
          {epoch + 1, objective, grad_norm_sum / static_cast<double>(steps), seconds_since(start)});
    }
  }
  result.theta_bar = std::move(theta);
  result.wall_time_seconds = seconds_since(start);
  result.seconds_per_epoch = epochs > 0 ? epoch_seconds / epochs : 0.0;
  return result;
}

}  // namespace

PotentialParams initial_params(const ClassSpec& spec, Index dim, std::uint64_t seed) {
  if (dim < 1) throw ValidationError("initial_params: dimension must be positive");
  Rng rng(seed, stream::kInit);
  switch (spec.kind) {
    case PotentialClass::quadratic:
      return Quadratic{Matrix::Identity(dim, dim), Vector::Zero(dim), spec.eps_spd};
    case PotentialClass::ball_linear:
      return BallLinear{Vector::Zero(dim), spec.radius};
    case PotentialClass::cone_combo: {
      if (spec.basis.empty()) throw ValidationError("cone_combo class requires a basis");
      ConeCombo c{Vector::Constant(static_cast<Index>(spec.basis.size()), 1.0 / static_cast<double>(spec.basis.size())),
                  spec.basis};
      validate_feasible(c);
      if (input_dim(c) != dim) throw ValidationError("cone_combo basis dimension does not match the samples");
      return c;
    }
    case PotentialClass::plq: {
      if (spec.plq_pieces < 1) throw ValidationError("plq class requires at least one piece");
      Plq p;
      p.eps_spd = spec.eps_spd;
      for (Index m = 0; m < spec.plq_pieces; ++m) {
        Vector b(dim);
        for (Index k = 0; k < dim; ++k) b(k) = 0.1 * rng.normal();
        p.pieces.push_back({Matrix::Identity(dim, dim), std::move(b), 0.0});
      }
      return p;
    }
    case PotentialClass::icnn:
      return init_icnn(spec.icnn, dim, rng);
  }
  throw ValidationError("initial_params: unknown class");
}

double StepSchedule::at(int epoch) const {
  const std::size_t k = std::min(static_cast<std::size_t>(std::max(epoch, 0)), values.size() - 1);
  return values[k] / (1.0 + decay * epoch);
}

Index TrainConfig::batch_at(int epoch) const {
  const std::size_t k = std::min(static_cast<std::size_t>(std::max(epoch, 0)), batch_sizes.size() - 1);
  return batch_sizes[k];
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("TrainConfig: epochs must be >= 1");
  if (step.values.empty()) throw ValidationError("TrainConfig: empty step schedule");
  for (double v : step.values)
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("TrainConfig: step sizes must be positive");
  if (!(step.decay >= 0.0)) throw ValidationError("TrainConfig: step decay must be >= 0");
  if (batch_sizes.empty()) throw ValidationError("TrainConfig: empty batch schedule");
  for (Index m : batch_sizes)
    if (m < 1) throw ValidationError("TrainConfig: batch sizes must be >= 1");
  if (eval_every < 0) throw ValidationError("TrainConfig: eval_every must be >= 0");
  if (search_box) search_box->validate();
  inner.validate();
}

double estimate_objective(const PotentialParams& theta, const SampleSet& s_mu, const SampleSet& s_nu,
                          const ConjugateConfig& inner) {
  require_same_dim(s_mu, s_nu, theta);
  inner.validate();
  return objective_with_cache(Potential(theta), s_mu, s_nu, inner, nullptr);
}

ParamGradient stochastic_gradient(const PotentialParams& theta, const SampleSet& batch_x, const SampleSet& batch_y,
                                  const ConjugateConfig& inner, WarmStartCache* warm) {
  require_same_dim(batch_x, batch_y, theta);
  inner.validate();
  const Potential f(theta);
  std::vector<Index> xr(static_cast<std::size_t>(batch_x.count())), yr(static_cast<std::size_t>(batch_y.count()));
  std::iota(xr.begin(), xr.end(), Index{0});
  std::iota(yr.begin(), yr.end(), Index{0});
  return {batch_gradient(f, batch_x.points(), xr, batch_y.points(), yr, inner, warm, nullptr), param_blocks(theta)};
}

FitResult fit(const ClassSpec& spec, const SampleSet& s_mu, const SampleSet& s_nu, const TrainConfig& config) {
  config.validate();
  if (s_mu.dim() != s_nu.dim()) throw ValidationError("fit: sample sets have different dimensions");
  return run_sgd(initial_params(spec, s_mu.dim(), config.seed), s_mu, s_nu, config, config.epochs);
}

FitResult resume(const PotentialParams& theta, const SampleSet& s_mu, const SampleSet& s_nu, const TrainConfig& config,
                 int epochs) {
  if (epochs < 0) throw ValidationError("resume: epochs must be >= 0");
  TrainConfig checked = config;
  checked.epochs = std::max(epochs, 1);
  checked.validate();
  if (epochs == 0) {
    validate_feasible(theta);
    FitResult r;
    r.theta_bar = theta;
    return r;
  }
  return run_sgd(theta, s_mu, s_nu, config, epochs);
}

Quadratic QuadraticFit::params(double eps_spd) const { return Quadratic{a_bar, b_bar, eps_spd}; }

QuadraticFit fit_quadratic_closed_form(const SampleSet& s_mu, const SampleSet& s_nu, double eps_spd) {
  if (s_mu.dim() != s_nu.dim()) throw ValidationError("fit_quadratic_closed_form: dimension mismatch");
  const Moments mx = empirical_moments(s_mu);
  const Moments my = empirical_moments(s_nu);
  QuadraticFit out;
  Matrix sx = mx.covariance;
  Matrix sy = my.covariance;
  if (linalg::min_eigenvalue(sx) < eps_spd) {
    sx = linalg::eigen_clamp(sx, eps_spd);
    out.clamped = true;
  }
  if (linalg::min_eigenvalue(sy) < eps_spd) {
    sy = linalg::eigen_clamp(sy, eps_spd);
    out.clamped = true;
  }
  const Matrix sx_half = linalg::sqrt_psd(sx);
  const Matrix sx_inv_half = linalg::inv_sqrt_spd(sx);
  const Matrix middle = linalg::sqrt_psd(sx_half * sy * sx_half);
  out.a_bar = linalg::symmetrize(sx_inv_half * middle * sx_inv_half);
  out.b_bar = my.mean - out.a_bar * mx.mean;
  out.min_value = mx.mean.dot(my.mean) + middle.trace();
  if (!out.a_bar.allFinite() || !out.b_bar.allFinite())
    throw ValidationError("fit_quadratic_closed_form: singular covariance");
  if (linalg::min_eigenvalue(out.a_bar) < eps_spd) {
    out.a_bar = linalg::eigen_clamp(out.a_bar, eps_spd);
    out.clamped = true;
  }
  return out;
}

Vector fit_ball_linear_closed_form(const SampleSet& s_mu, const SampleSet& s_nu, double radius) {
  if (!(radius > 0.0)) throw ValidationError("fit_ball_linear_closed_form: radius must be positive");
  if (s_mu.dim() != s_nu.dim()) throw ValidationError("fit_ball_linear_closed_form: dimension mismatch");
  Vector m = (s_nu.points().colwise().mean() - s_mu.points().colwise().mean()).transpose();
  const double norm = m.norm();
  if (norm > radius) m *= radius / norm;
  return m;
}

PotentialParams fit_potential(const ClassSpec& spec, const SampleSet& s_mu, const SampleSet& s_nu,
                              const TrainConfig& config) {
  if (spec.prefer_closed_form) {
    if (spec.kind == PotentialClass::quadratic)
      return fit_quadratic_closed_form(s_mu, s_nu, spec.eps_spd).params(spec.eps_spd);
    if (spec.kind == PotentialClass::ball_linear)
      return BallLinear{fit_ball_linear_closed_form(s_mu, s_nu, spec.radius), spec.radius};
  }
  return fit(spec, s_mu, s_nu, config).theta_bar;
}

}  // namespace w2r
