#include "w2r/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace w2r {

namespace {

void require_square_problem(const SampleSet& s_mu, const SampleSet& s_nu, const char* who) {
  if (s_mu.count() != s_nu.count())
    throw ValidationError(std::string(who) + ": sample counts differ (equal-size uniform measures required)");
  if (s_mu.dim() != s_nu.dim()) throw ValidationError(std::string(who) + ": dimensions differ");
  if (s_mu.count() > kMaxDenseSamples)
    throw ValidationError(std::string(who) + ": N exceeds the dense limit of " + std::to_string(kMaxDenseSamples));
}

// ε·(log w − log Σⱼ exp(k(i, j) + shift(j))) for every row i, where k = −C/ε.
// Streams over columns so the column-major matrix is read contiguously.
Vector row_potential(const Matrix& k, const Vector& shift, double log_w, double epsilon) {
  Eigen::ArrayXd mx = Eigen::ArrayXd::Constant(k.rows(), -std::numeric_limits<double>::infinity());
  for (Index j = 0; j < k.cols(); ++j) mx = mx.max(k.col(j).array() + shift(j));
  Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(k.rows());
  for (Index j = 0; j < k.cols(); ++j) sum += (k.col(j).array() + (shift(j) - mx)).exp();
  return (epsilon * (log_w - (mx + sum.log()))).matrix();
}

// Same as row_potential for columns, with shift indexed by row.
Vector col_potential(const Matrix& k, const Vector& shift, double log_w, double epsilon) {
  Vector out(k.cols());
  for (Index j = 0; j < k.cols(); ++j) {
    const Eigen::ArrayXd v = k.col(j).array() + shift.array();
    const double mx = v.maxCoeff();
    out(j) = epsilon * (log_w - (mx + std::log((v - mx).exp().sum())));
  }
  return out;
}

}  // namespace

Matrix half_sq_cost_matrix(const SampleSet& s_mu, const SampleSet& s_nu) {
  const Index n = s_mu.count(), m = s_nu.count();
  Matrix c(n, m);
  for (Index j = 0; j < m; ++j) {
    const auto y = s_nu.points().row(j);
    for (Index i = 0; i < n; ++i) c(i, j) = 0.5 * (s_mu.points().row(i) - y).squaredNorm();
  }
  return c;
}

Assignment exact_w2_assignment(const SampleSet& s_mu, const SampleSet& s_nu) {
  require_square_problem(s_mu, s_nu, "exact_w2_assignment");
  const Matrix cost = half_sq_cost_matrix(s_mu, s_nu);
  const Index n = cost.rows();
  const double inf = std::numeric_limits<double>::infinity();

  // Shortest augmenting path with dual potentials (1-based; column 0 is a sentinel).
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<Index> match(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  std::vector<double> minv(static_cast<std::size_t>(n + 1));
  std::vector<char> used(static_cast<std::size_t>(n + 1));
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Index i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[sj];
        if (cur < minv[sj]) {
          minv[sj] = cur;
          way[sj] = j0;
        }
        if (minv[sj] < delta) {
          delta = minv[sj];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) {
          u[static_cast<std::size_t>(match[sj])] += delta;
          v[sj] -= delta;
        } else {
          minv[sj] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment out;
  out.permutation.assign(static_cast<std::size_t>(n), 0);
  for (Index j = 1; j <= n; ++j) out.permutation[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = j - 1;
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total += cost(i, out.permutation[static_cast<std::size_t>(i)]);
  out.w2_squared = total / static_cast<double>(n);
  out.w2 = std::sqrt(out.w2_squared);
  return out;
}

double brute_force_w2_squared(const SampleSet& s_mu, const SampleSet& s_nu) {
  require_square_problem(s_mu, s_nu, "brute_force_w2_squared");
  if (s_mu.count() > 8) throw ValidationError("brute_force_w2_squared: refusing N > 8");
  const Matrix cost = half_sq_cost_matrix(s_mu, s_nu);
  const Index n = cost.rows();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) total += cost(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(n);
}

SinkhornResult sinkhorn(const SampleSet& s_mu, const SampleSet& s_nu, double epsilon, int iters, bool track_history,
                        double tol) {
  require_square_problem(s_mu, s_nu, "sinkhorn");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ValidationError("sinkhorn: epsilon must be positive");
  if (iters < 1) throw ValidationError("sinkhorn: iters must be >= 1");
  if (!(tol >= 0.0)) throw ValidationError("sinkhorn: tol must be >= 0");

  const Matrix cost = half_sq_cost_matrix(s_mu, s_nu);
  const Index n = cost.rows();
  const double log_w = -std::log(static_cast<double>(n));
  const double target = 1.0 / static_cast<double>(n);
  const Matrix scaled = -cost / epsilon;  // −C/ε
  Vector f = Vector::Zero(n), g = Vector::Zero(n);

  SinkhornResult out;
  auto coupling_of = [&]() -> Matrix {
    return ((scaled.colwise() + f / epsilon).rowwise() + (g / epsilon).transpose()).array().exp().matrix();
  };
  auto violation_of = [&](const Matrix& pi) {
    const double rows = (pi.rowwise().sum().array() - target).abs().maxCoeff();
    const double cols = (pi.colwise().sum().array() - target).abs().maxCoeff();
    return std::max(rows, cols);
  };

  const auto start = std::chrono::steady_clock::now();
  Vector f_next = row_potential(scaled, g / epsilon, log_w, epsilon);
  for (int it = 0; it < iters; ++it) {
    f = std::move(f_next);
    g = col_potential(scaled, f / epsilon, log_w, epsilon);
    ++out.sweeps;
    if (track_history) {
      const Matrix pi = coupling_of();
      out.value_history.push_back(pi.cwiseProduct(cost).sum());
      out.violation_history.push_back(violation_of(pi));
    }
    if (it + 1 == iters) break;
    f_next = row_potential(scaled, g / epsilon, log_w, epsilon);
    // Columns are balanced exactly; row i currently sums to w·exp((fᵢ − f_nextᵢ)/ε).
    if (tol > 0.0) {
      const double row_violation = (target * (((f - f_next) / epsilon).array().exp() - 1.0)).abs().maxCoeff();
      if (row_violation <= tol) break;
    }
  }
  out.seconds_per_sweep = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / out.sweeps;

  out.coupling.matrix = coupling_of();
  out.coupling.value = out.coupling.matrix.cwiseProduct(cost).sum();
  out.marginal_violation = violation_of(out.coupling.matrix);
  return out;
}

SampleSet barycentric_map(const Coupling& coupling, const SampleSet& s_mu, const SampleSet& s_nu) {
  const Matrix& pi = coupling.matrix;
  if (pi.rows() != s_mu.count() || pi.cols() != s_nu.count())
    throw ValidationError("barycentric_map: coupling shape does not match the samples");
  if (s_mu.dim() != s_nu.dim()) throw ValidationError("barycentric_map: dimensions differ");
  if (pi.size() > 0 && pi.minCoeff() < 0.0) throw ValidationError("barycentric_map: negative coupling entry");
  const Vector mass = pi.rowwise().sum();
  for (Index i = 0; i < mass.size(); ++i)
    if (!(mass(i) > 0.0)) throw ValidationError("barycentric_map: row " + std::to_string(i) + " has zero mass");
  Matrix image = pi * s_nu.points();
  image.array().colwise() /= mass.array();
  return SampleSet(std::move(image));
}

double map_error(const SampleSet& estimated, const SampleSet& reference) {
  if (estimated.count() != reference.count() || estimated.dim() != reference.dim())
    throw ValidationError("map_error: shape mismatch");
  return (estimated.points() - reference.points()).rowwise().norm().mean();
}

void write_coupling_csv(const Coupling& coupling, const std::filesystem::path& path,
                        const std::vector<std::string>& comments) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& c : comments) out << "# " << c << '\n';
  char buf[32];
  const Matrix& pi = coupling.matrix;
  for (Index i = 0; i < pi.rows(); ++i) {
    for (Index j = 0; j < pi.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", pi(i, j));
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace w2r
