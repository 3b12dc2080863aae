#include "w2r/metrics.hpp"

#include "w2r/linalg.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace w2r {

namespace {

double half_mean_sq_norm(const SampleSet& s) {
  return 0.5 * s.points().rowwise().squaredNorm().mean();
}

std::string indexed(const char* name, Index i) { return std::string(name) + "[" + std::to_string(i) + "]"; }

std::string indexed(const char* name, Index i, Index j) {
  return std::string(name) + "[" + std::to_string(i) + "," + std::to_string(j) + "]";
}

}  // namespace

W2fReport w2f_squared(const PotentialParams& theta_bar, const SampleSet& s_mu, const SampleSet& s_nu,
                      const ConjugateConfig& inner) {
  W2fReport r;
  r.self_term_mu = half_mean_sq_norm(s_mu);
  r.self_term_nu = half_mean_sq_norm(s_nu);
  r.objective = estimate_objective(theta_bar, s_mu, s_nu, inner);
  r.w2f_squared = r.self_term_mu + r.self_term_nu - r.objective;
  r.clamped = r.w2f_squared < 0.0;
  r.solver_warning = r.w2f_squared < -1e-6;
  r.w2f = std::sqrt(std::max(r.w2f_squared, 0.0));
  return r;
}

SymmetricW2f w2f_symmetric(const ClassSpec& spec, const SampleSet& s_mu, const SampleSet& s_nu,
                           const TrainConfig& config, const ConjugateConfig& inner) {
  SymmetricW2f out;
  out.forward = w2f_squared(fit_potential(spec, s_mu, s_nu, config), s_mu, s_nu, inner).w2f;
  out.backward = w2f_squared(fit_potential(spec, s_nu, s_mu, config), s_nu, s_mu, inner).w2f;
  out.total = out.forward + out.backward;
  return out;
}

TransportMap transport_map(const PotentialParams& theta_bar, const SampleSet& s_nu, const ConjugateConfig& inner) {
  inner.validate();
  const Potential f(theta_bar);
  if (f.dim() != s_nu.dim()) throw ValidationError("transport_map: dimension mismatch");
  std::vector<Index> rows(static_cast<std::size_t>(s_nu.count()));
  std::iota(rows.begin(), rows.end(), Index{0});
  const auto solves = conjugate_batch(f, s_nu.points(), rows, inner, nullptr);
  Matrix image(s_nu.count(), s_nu.dim());
  Index nonconverged = 0;
  for (std::size_t k = 0; k < solves.size(); ++k) {
    image.row(static_cast<Index>(k)) = solves[k].x_hat.transpose();
    if (!solves[k].converged) ++nonconverged;
  }
  return {SampleSet(std::move(image)), nonconverged};
}

std::vector<MomentRow> moment_match_report(const PotentialParams& theta_bar, const SampleSet& s_mu,
                                           const SampleSet& s_nu, const ConjugateConfig& inner) {
  const SampleSet pushed = transport_map(theta_bar, s_nu, inner).image;
  const Moments mm = empirical_moments(s_mu);
  const Moments pm = empirical_moments(pushed);
  std::vector<MomentRow> rows;
  auto add = [&](std::string name, double a, double b) { rows.push_back({std::move(name), a, b, std::abs(a - b)}); };
  for (Index i = 0; i < mm.mean.size(); ++i) add(indexed("mean", i), mm.mean(i), pm.mean(i));
  // The ball-linear tangent space is spanned by the coordinates alone.
  if (!std::holds_alternative<BallLinear>(theta_bar)) {
    for (Index i = 0; i < mm.mean.size(); ++i)
      for (Index j = i; j < mm.mean.size(); ++j) add(indexed("cov", i, j), mm.covariance(i, j), pm.covariance(i, j));
  }

  if (const auto* c = std::get_if<ConeCombo>(&theta_bar)) {
    for (std::size_t m = 0; m < c->basis.size(); ++m) {
      // Unit weight on basis m alone gives f_m itself.
      ConeCombo single = *c;
      single.alphas.setZero();
      single.alphas(static_cast<Index>(m)) = 1.0;
      const PotentialParams fm = single;
      const Potential f = Potential::unchecked(fm);
      double a = 0.0, b = 0.0;
      for (Index i = 0; i < s_mu.count(); ++i) a += f.value(s_mu.row(i));
      for (Index i = 0; i < pushed.count(); ++i) b += f.value(pushed.row(i));
      add(indexed("basis", static_cast<Index>(m)), a / static_cast<double>(s_mu.count()),
          b / static_cast<double>(pushed.count()));
    }
  }
  return rows;
}

double max_residual(const std::vector<MomentRow>& rows, std::string_view prefix) {
  double worst = 0.0;
  for (const auto& r : rows)
    if (std::string_view(r.statistic).starts_with(prefix)) worst = std::max(worst, r.residual);
  return worst;
}

void write_moment_csv(const std::vector<MomentRow>& rows, const std::filesystem::path& path,
                      const std::vector<std::string>& comments) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& c : comments) out << "# " << c << '\n';
  out << "statistic,mu_value,push_value,residual\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", r.mu_value, r.push_value, r.residual);
    // Statistic names contain commas, so they are quoted.
    out << '"' << r.statistic << "\"," << buf << '\n';
  }
}

double gaussian_w2_closed_form(const GaussianSpec& mu, const GaussianSpec& nu) {
  mu.validate();
  nu.validate();
  if (mu.dim() != nu.dim()) throw ValidationError("gaussian_w2_closed_form: dimension mismatch");
  const Matrix root_mu = linalg::sqrt_psd(mu.covariance);
  const Matrix cross = linalg::sqrt_psd(root_mu * nu.covariance * root_mu);
  const double bures = (mu.covariance + nu.covariance - 2.0 * cross).trace();
  const double sq = 0.5 * ((mu.mean - nu.mean).squaredNorm() + bures);
  return std::sqrt(std::max(sq, 0.0));
}

}  // namespace w2r
