#include "w2r_cli/commands.hpp"

#include "w2r/checkpoint.hpp"
#include "w2r/linalg.hpp"
#include "w2r/metrics.hpp"
#include "w2r/oracle.hpp"
#include "w2r/rng.hpp"

#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace w2r::cli {

using nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::filesystem::path output_path(const ExperimentConfig& c, const std::string& name) {
  std::filesystem::create_directories(c.out);
  return c.out / name;
}

void write_table(const std::filesystem::path& path, const std::vector<std::string>& comments,
                 const std::vector<std::string>& columns, const std::vector<std::vector<std::string>>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& line : comments) out << "# " << line << '\n';
  for (std::size_t k = 0; k < columns.size(); ++k) out << (k ? "," : "") << columns[k];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << row[k];
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ordered_json json_header(const std::string& command, const ExperimentConfig& c) {
  return {{"command", command},
          {"config_hash", hex(c.config_hash)},
          {"seed", c.seed},
          {"config", ordered_json::parse(c.resolved_json)}};
}

void write_json(const std::filesystem::path& path, const ordered_json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

MixtureSpec canonical_mixture(const ExperimentConfig& c) {
  MixtureSpec mix;
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0})
      mix.components.push_back(
          {0.25, {Vector{{sx * c.mixture_spread, sy * c.mixture_spread}}, c.mixture_var * Matrix::Identity(2, 2)}});
  return mix;
}

bool has_closed_form_fit(const ClassSpec& spec) {
  return spec.prefer_closed_form &&
         (spec.kind == PotentialClass::quadratic || spec.kind == PotentialClass::ball_linear);
}

PotentialParams theta_for_distance(const ExperimentConfig& c, const SamplePair& s, std::string& source) {
  if (std::filesystem::exists(c.checkpoint)) {
    source = "checkpoint";
    return load_checkpoint(c.checkpoint);
  }
  source = "fit";
  return fit_potential(c.class_spec, s.mu, s.nu, c.train);
}

}  // namespace

SamplePair make_samples(const ExperimentConfig& c, Index n, Index n_nu, std::uint64_t seed) {
  const std::uint64_t seed_mu = splitmix64(seed ^ 0x6d75ULL);
  const std::uint64_t seed_nu = splitmix64(seed ^ 0x6e75ULL);
  switch (c.data) {
    case DataSource::canonical: {
      const MixtureSpec mix = canonical_mixture(c);
      return {sample_mixture(mix, n, seed_mu),
              affine_pushforward(sample_mixture(mix, n_nu, seed_nu), c.affine_a, c.affine_b)};
    }
    case DataSource::gaussian:
      return {sample_gaussian(c.mu_gaussian, n, seed_mu), sample_gaussian(c.nu_gaussian, n_nu, seed_nu)};
    case DataSource::files:
      break;
  }
  SamplePair s{load_csv(c.mu_path), load_csv(c.nu_path)};
  if (s.mu.dim() != s.nu.dim()) throw ValidationError("sample files have different dimensions");
  return s;
}

SamplePair make_samples(const ExperimentConfig& c) { return make_samples(c, c.n, c.n_nu, c.seed); }

SampleSet GroundTruth::apply(const SampleSet& ys) const {
  return SampleSet((ys.points() * linear.transpose()).rowwise() + offset.transpose());
}

GroundTruth ground_truth(const ExperimentConfig& c) {
  GroundTruth g;
  if (c.data == DataSource::canonical) {
    const Matrix& a = c.affine_a;
    if (!linalg::is_symmetric(a, 1e-12) || linalg::min_eigenvalue(a) <= 0.0)
      throw ConfigError("affine_a must be symmetric positive definite for the map x -> Ax + b to be optimal");
    g.linear = a.inverse();
    g.offset = -g.linear * c.affine_b;
    const Matrix shift = a - Matrix::Identity(2, 2);
    const double second_moment = c.mixture_spread * c.mixture_spread + c.mixture_var;
    g.w2 = std::sqrt(0.5 * (second_moment * (shift * shift.transpose()).trace() + c.affine_b.squaredNorm()));
    return g;
  }
  if (c.data == DataSource::gaussian) {
    const Matrix root_nu = linalg::sqrt_psd(c.nu_gaussian.covariance);
    const Matrix inv_root_nu = linalg::inv_sqrt_spd(c.nu_gaussian.covariance);
    g.linear = inv_root_nu * linalg::sqrt_psd(root_nu * c.mu_gaussian.covariance * root_nu) * inv_root_nu;
    g.offset = c.mu_gaussian.mean - g.linear * c.nu_gaussian.mean;
    g.w2 = gaussian_w2_closed_form(c.mu_gaussian, c.nu_gaussian);
    return g;
  }
  throw ConfigError("a known optimal map requires data 'canonical' or 'gaussian'");
}

ConjugateConfig evaluation_inner(const ExperimentConfig& c, const PotentialParams& theta, const SampleSet& mu,
                                 const SampleSet& nu) {
  ConjugateConfig inner = c.eval_inner;
  if (c.train.search_box) {
    inner.search_box = c.train.search_box;
  } else if (strong_convexity_modulus(theta) == 0.0) {
    inner.search_box = default_search_box(mu, nu);
  }
  return inner;
}

std::vector<std::string> header_comments(const std::string& command, const ExperimentConfig& c) {
  return {"command=" + command, "config_hash=" + hex(c.config_hash), "seed=" + std::to_string(c.seed),
          "config=" + c.resolved_json};
}

std::vector<BenchmarkRow> run_benchmark(const ExperimentConfig& c, std::ostream* progress) {
  const GroundTruth truth = ground_truth(c);
  std::vector<BenchmarkRow> rows;
  for (const BenchMethod method : c.bench_methods) {
    for (const Index n : c.bench_n) {
      for (int s = 0; s < c.bench_seeds; ++s) {
        const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(s);
        const SamplePair data = make_samples(c, n, n, seed);
        const SampleSet reference = truth.apply(data.nu);
        BenchmarkRow row{method, n, data.mu.dim(), "", seed};

        if (method == BenchMethod::sinkhorn_barycentric) {
          // Rows index ν samples, so the barycentric projection estimates the ν → μ map.
          const SinkhornResult r = sinkhorn(data.nu, data.mu, c.epsilon, c.sinkhorn_iters, false, c.sinkhorn_tol);
          row.epsilon_or_class = fmt(c.epsilon);
          row.map_error = map_error(barycentric_map(r.coupling, data.nu, data.mu), reference);
          row.w2_error = std::abs(std::sqrt(std::max(r.coupling.value, 0.0)) - truth.w2);
          row.seconds_per_epoch = r.seconds_per_sweep;
        } else {
          ClassSpec spec = c.class_spec;
          spec.kind = method == BenchMethod::restricted_icnn ? PotentialClass::icnn : PotentialClass::quadratic;
          TrainConfig train = c.train;
          train.seed = seed;
          PotentialParams theta;
          if (has_closed_form_fit(spec)) {
            const auto start = Clock::now();
            theta = fit_quadratic_closed_form(data.mu, data.nu, spec.eps_spd).params(spec.eps_spd);
            row.seconds_per_epoch = seconds_since(start);
          } else {
            FitResult fitted = fit(spec, data.mu, data.nu, train);
            theta = std::move(fitted.theta_bar);
            row.seconds_per_epoch = fitted.seconds_per_epoch;
          }
          const ConjugateConfig inner = evaluation_inner(c, theta, data.mu, data.nu);
          row.epsilon_or_class = std::string(to_string(spec.kind));
          row.map_error = map_error(transport_map(theta, data.nu, inner).image, reference);
          row.w2_error = std::abs(w2f_squared(theta, data.mu, data.nu, inner).w2f - truth.w2);
        }
        if (progress)
          *progress << to_string(method) << " N=" << n << " seed=" << seed << " map_error=" << row.map_error
                    << " seconds_per_epoch=" << row.seconds_per_epoch << std::endl;
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

int cmd_generate(const ExperimentConfig& c, std::ostream& out) {
  const SamplePair s = make_samples(c);
  const auto comments = header_comments("generate", c);
  save_csv(s.mu, output_path(c, "s_mu.csv"), {.header = true, .comments = comments});
  save_csv(s.nu, output_path(c, "s_nu.csv"), {.header = true, .comments = comments});
  out << "wrote " << s.mu.count() << "x" << s.mu.dim() << " s_mu.csv and " << s.nu.count() << "x" << s.nu.dim()
      << " s_nu.csv to " << c.out.string() << '\n';
  return 0;
}

int cmd_fit(const ExperimentConfig& c, std::ostream& out) {
  const SamplePair s = make_samples(c);
  FitResult result;
  if (has_closed_form_fit(c.class_spec)) {
    const auto start = Clock::now();
    result.theta_bar = fit_potential(c.class_spec, s.mu, s.nu, c.train);
    result.wall_time_seconds = seconds_since(start);
  } else {
    result = fit(c.class_spec, s.mu, s.nu, c.train);
  }

  ordered_json ckpt = ordered_json::parse(params_to_json(result.theta_bar));
  ordered_json doc = {{"header", json_header("fit", c)}};
  for (auto& [key, value] : ckpt.items()) doc[key] = value;
  ordered_json history = ordered_json::array();
  std::vector<std::vector<std::string>> log;
  for (const auto& h : result.history) {
    history.push_back({{"epoch", h.epoch}, {"objective", h.objective}, {"grad_norm", h.grad_norm}, {"seconds", h.seconds}});
    log.push_back({std::to_string(h.epoch), fmt(h.objective), fmt(h.grad_norm), fmt(h.seconds)});
  }
  doc["history"] = std::move(history);
  write_json(c.checkpoint, doc);
  write_table(output_path(c, "train_log.csv"), header_comments("fit", c), {"epoch", "objective", "grad_norm", "seconds"},
              log);

  out << "class " << class_tag(result.theta_bar) << ", ";
  if (result.history.empty()) {
    out << "closed form";
  } else {
    out << c.train.epochs << " epochs";
  }
  if (!result.history.empty()) out << ", final objective " << fmt(result.history.back().objective);
  out << ", " << result.wall_time_seconds << " s\n";
  if (result.inner_nonconverged > 0)
    out << "warning: " << result.inner_nonconverged << " inner solves hit the iteration cap\n";
  out << "checkpoint " << c.checkpoint.string() << '\n';
  return 0;
}

int cmd_distance(const ExperimentConfig& c, bool symmetric, std::ostream& out) {
  const SamplePair s = make_samples(c);
  ordered_json doc = {{"header", json_header(symmetric ? "distance --symmetric" : "distance", c)}};

  if (symmetric) {
    ConjugateConfig inner = c.eval_inner;
    inner.search_box = c.train.search_box ? *c.train.search_box : default_search_box(s.mu, s.nu);
    const SymmetricW2f sym = w2f_symmetric(c.class_spec, s.mu, s.nu, c.train, inner);
    doc["forward"] = sym.forward;
    doc["backward"] = sym.backward;
    doc["total"] = sym.total;
    write_json(output_path(c, "distance.json"), doc);
    out << "forward " << fmt(sym.forward) << "\nbackward " << fmt(sym.backward) << "\ntotal " << fmt(sym.total)
        << '\n';
    return 0;
  }

  std::string source;
  const PotentialParams theta = theta_for_distance(c, s, source);
  const W2fReport r = w2f_squared(theta, s.mu, s.nu, evaluation_inner(c, theta, s.mu, s.nu));
  doc["theta_source"] = source;
  doc["class_tag"] = class_tag(theta);
  doc["w2f_squared"] = r.w2f_squared;
  doc["w2f"] = r.w2f;
  doc["objective"] = r.objective;
  doc["self_term_mu"] = r.self_term_mu;
  doc["self_term_nu"] = r.self_term_nu;
  doc["clamped"] = r.clamped;
  doc["solver_warning"] = r.solver_warning;
  if (s.mu.dim() == s.nu.dim()) {
    const Moments m_mu = empirical_moments(s.mu);
    const Moments m_nu = empirical_moments(s.nu);
    try {
      doc["gaussian_w2_of_moments"] =
          gaussian_w2_closed_form({m_mu.mean, m_mu.covariance}, {m_nu.mean, m_nu.covariance});
    } catch (const ValidationError&) {
      doc["gaussian_w2_of_moments"] = nullptr;  // singular empirical covariance
    }
  }
  write_json(output_path(c, "distance.json"), doc);
  out << "w2f " << fmt(r.w2f) << "\nw2f_squared " << fmt(r.w2f_squared) << '\n';
  if (r.solver_warning)
    out << "warning: w2f_squared was negative before clamping; the fit is not optimal or the inner solver is inaccurate\n";
  return 0;
}

int cmd_map(const ExperimentConfig& c, std::ostream& out) {
  if (!std::filesystem::exists(c.checkpoint))
    throw std::runtime_error("checkpoint not found: " + c.checkpoint.string() + " (run `fit` first)");
  const PotentialParams theta = load_checkpoint(c.checkpoint);
  const SamplePair s = make_samples(c);
  const ConjugateConfig inner = evaluation_inner(c, theta, s.mu, s.nu);
  const TransportMap t = transport_map(theta, s.nu, inner);
  const auto comments = header_comments("map", c);
  save_csv(t.image, output_path(c, "pushforward.csv"), {.header = true, .comments = comments});
  const auto rows = moment_match_report(theta, s.mu, s.nu, inner);
  write_moment_csv(rows, output_path(c, "moments.csv"), comments);
  out << "mapped " << t.image.count() << " samples, max mean residual " << fmt(max_residual(rows, "mean"));
  if (class_tag(theta) != "ball_linear") out << ", max cov residual " << fmt(max_residual(rows, "cov"));
  out << '\n';
  if (t.nonconverged > 0) out << "warning: " << t.nonconverged << " inner solves did not converge\n";
  return 0;
}

int cmd_oracle(const ExperimentConfig& c, std::ostream& out) {
  const SamplePair s = make_samples(c);
  const Assignment a = exact_w2_assignment(s.mu, s.nu);
  ordered_json doc = {{"header", json_header("oracle", c)},
                      {"n", s.mu.count()},
                      {"d", s.mu.dim()},
                      {"w2_squared", a.w2_squared},
                      {"w2", a.w2}};
  write_json(output_path(c, "oracle.json"), doc);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < a.permutation.size(); ++i)
    rows.push_back({std::to_string(i), std::to_string(a.permutation[i])});
  write_table(output_path(c, "assignment.csv"), header_comments("oracle", c), {"i", "sigma_i"}, rows);
  out << "w2_squared " << fmt(a.w2_squared) << "\nw2 " << fmt(a.w2) << '\n';
  return 0;
}

int cmd_sinkhorn(const ExperimentConfig& c, std::ostream& out) {
  const SamplePair s = make_samples(c);
  const SinkhornResult r = sinkhorn(s.mu, s.nu, c.epsilon, c.sinkhorn_iters, false, c.sinkhorn_tol);
  const auto comments = header_comments("sinkhorn", c);
  ordered_json doc = {{"header", json_header("sinkhorn", c)},
                      {"epsilon", c.epsilon},
                      {"sweeps", r.sweeps},
                      {"value", r.coupling.value},
                      {"marginal_violation", r.marginal_violation},
                      {"seconds_per_sweep", r.seconds_per_sweep}};
  write_json(output_path(c, "sinkhorn.json"), doc);
  save_csv(barycentric_map(r.coupling, s.mu, s.nu), output_path(c, "barycentric.csv"),
           {.header = true, .comments = comments});
  if (c.write_coupling) write_coupling_csv(r.coupling, output_path(c, "coupling.csv"), comments);
  out << "value " << fmt(r.coupling.value) << "\nmarginal_violation " << fmt(r.marginal_violation) << "\nsweeps "
      << r.sweeps << '\n';
  return 0;
}

int cmd_benchmark(const ExperimentConfig& c, std::ostream& out) {
  const auto rows = run_benchmark(c, &out);
  std::vector<std::vector<std::string>> table;
  for (const auto& r : rows)
    table.push_back({std::string(to_string(r.method)), std::to_string(r.n), std::to_string(r.d), r.epsilon_or_class,
                     std::to_string(r.seed), fmt(r.map_error), fmt(r.w2_error), fmt(r.seconds_per_epoch)});
  write_table(output_path(c, "benchmark.csv"), header_comments("benchmark", c),
              {"method", "N", "d", "epsilon_or_class", "seed", "map_error", "w2_error", "seconds_per_epoch"}, table);
  out << "wrote " << rows.size() << " rows to " << (c.out / "benchmark.csv").string() << '\n';
  return 0;
}

}  // namespace w2r::cli
