#include "w2r/distributions.hpp"

#include "w2r/linalg.hpp"
#include "w2r/rng.hpp"

#include <Eigen/Cholesky>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace w2r {

SampleSet::SampleSet(Matrix points) : points_(std::move(points)) {
  if (points_.rows() < 1) throw ValidationError("SampleSet: need at least one sample (N >= 1)");
  if (points_.cols() < 1) throw ValidationError("SampleSet: dimension must be positive");
  if (!points_.allFinite()) throw ValidationError("SampleSet: entries must be finite");
}

SampleSet SampleSet::subset(const std::vector<Index>& indices) const {
  Matrix out(static_cast<Index>(indices.size()), dim());
  for (std::size_t k = 0; k < indices.size(); ++k) out.row(static_cast<Index>(k)) = points_.row(indices[k]);
  return SampleSet(std::move(out));
}

void GaussianSpec::validate() const {
  const Index d = mean.size();
  if (d < 1) throw ValidationError("GaussianSpec: empty mean");
  if (covariance.rows() != d || covariance.cols() != d)
    throw ValidationError("GaussianSpec: covariance shape does not match mean");
  if (!mean.allFinite() || !covariance.allFinite())
    throw ValidationError("GaussianSpec: non-finite entries");
  if (!linalg::is_symmetric(covariance, 1e-12))
    throw ValidationError("GaussianSpec: covariance is not symmetric");
  if (!(linalg::min_eigenvalue(covariance) > 0.0))
    throw ValidationError("GaussianSpec: covariance is not positive definite");
}

Index MixtureSpec::dim() const {
  return components.empty() ? 0 : components.front().spec.dim();
}

void MixtureSpec::validate() const {
  if (components.empty()) throw ValidationError("MixtureSpec: no components");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight >= 0.0)) throw ValidationError("MixtureSpec: negative weight");
    if (c.spec.dim() != dim()) throw ValidationError("MixtureSpec: inconsistent dimensions");
    c.spec.validate();
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ValidationError("MixtureSpec: weights must sum to 1");
}

namespace {

void require_count(Index n) {
  if (n < 1) throw ValidationError("sample count must be >= 1");
}

Matrix lower_cholesky(const GaussianSpec& spec) {
  Eigen::LLT<Matrix> llt(spec.covariance);
  if (llt.info() != Eigen::Success) throw ValidationError("GaussianSpec: Cholesky factorization failed");
  return llt.matrixL();
}

Vector draw_gaussian(Rng& rng, const Vector& mean, const Matrix& chol) {
  Vector z(mean.size());
  for (Index k = 0; k < z.size(); ++k) z(k) = rng.normal();
  return mean + chol * z;
}

}  // namespace

SampleSet sample_gaussian(const GaussianSpec& spec, Index n, std::uint64_t seed) {
  spec.validate();
  require_count(n);
  const Matrix chol = lower_cholesky(spec);
  Rng rng(seed, stream::kGaussian);
  Matrix pts(n, spec.dim());
  for (Index i = 0; i < n; ++i) pts.row(i) = draw_gaussian(rng, spec.mean, chol).transpose();
  return SampleSet(std::move(pts));
}

SampleSet sample_mixture(const MixtureSpec& spec, Index n, std::uint64_t seed) {
  spec.validate();
  require_count(n);
  std::vector<Matrix> chols;
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& c : spec.components) {
    chols.push_back(lower_cholesky(c.spec));
    acc += c.weight;
    cumulative.push_back(acc);
  }
  Rng rng(seed, stream::kMixture);
  Matrix pts(n, spec.dim());
  for (Index i = 0; i < n; ++i) {
    const double u = rng.uniform() * acc;
    std::size_t k = 0;
    // Zero-weight components are never selected: u < cumulative[k] is strict.
    while (k + 1 < cumulative.size() && !(u < cumulative[k])) ++k;
    pts.row(i) = draw_gaussian(rng, spec.components[k].spec.mean, chols[k]).transpose();
  }
  return SampleSet(std::move(pts));
}

SampleSet sample_two_point(double v, double alpha, Index n, std::uint64_t seed) {
  if (!(std::abs(alpha) <= 0.5)) throw ValidationError("sample_two_point: |alpha| must be <= 1/2");
  if (!std::isfinite(v)) throw ValidationError("sample_two_point: v must be finite");
  require_count(n);
  Rng rng(seed, stream::kTwoPoint);
  Matrix pts(n, 1);
  const double p_plus = 0.5 + alpha;
  for (Index i = 0; i < n; ++i) pts(i, 0) = rng.uniform() < p_plus ? v : -v;
  return SampleSet(std::move(pts));
}

Moments empirical_moments(const SampleSet& s) {
  const Matrix& x = s.points();
  const double n = static_cast<double>(x.rows());
  Vector mean = x.colwise().sum().transpose() / n;
  const Matrix centered = x.rowwise() - mean.transpose();
  Matrix cov = (centered.transpose() * centered) / n;
  return {std::move(mean), linalg::symmetrize(cov)};
}

SampleSet affine_pushforward(const SampleSet& s, const Matrix& a, const Vector& b) {
  if (a.cols() != s.dim() || a.rows() != b.size())
    throw ValidationError("affine_pushforward: shape mismatch");
  Matrix out = (s.points() * a.transpose()).rowwise() + b.transpose();
  return SampleSet(std::move(out));
}

void save_csv(const SampleSet& s, const std::filesystem::path& path, const CsvOptions& opts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path.string() + " for writing");
  for (const auto& c : opts.comments) out << "# " << c << '\n';
  if (opts.header) {
    for (Index j = 0; j < s.dim(); ++j) out << (j ? "," : "") << 'x' << j;
    out << '\n';
  }
  char buf[32];
  const Matrix& x = s.points();
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", x(i, j));
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_csv: write failed for " + path.string());
}

namespace {

bool parse_double(std::string_view field, double& value) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
    field.remove_suffix(1);
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  return ec == std::errc() && ptr == field.data() + field.size();
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    fields.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

}  // namespace

SampleSet load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path.string());
  std::vector<double> values;
  Index width = -1;
  Index rows = 0;
  std::size_t line_no = 0;
  bool seen_data_or_header = false;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (view.find_first_not_of(" \t") == std::string_view::npos) continue;
    if (view.front() == '#') continue;
    const auto fields = split_commas(view);
    if (!seen_data_or_header) {
      seen_data_or_header = true;
      if (view.front() == 'x') {
        width = static_cast<Index>(fields.size());
        continue;
      }
    }
    if (width < 0) width = static_cast<Index>(fields.size());
    if (static_cast<Index>(fields.size()) != width) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": expected " << width << " fields, found " << fields.size();
      throw ParseError(msg.str(), line_no);
    }
    for (auto f : fields) {
      double v;
      if (!parse_double(f, v) || !std::isfinite(v)) {
        std::ostringstream msg;
        msg << path.string() << ":" << line_no << ": invalid number '" << f << "'";
        throw ParseError(msg.str(), line_no);
      }
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw ValidationError("load_csv: " + path.string() + " contains no samples (N >= 1 required)");
  Matrix pts(rows, width);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < width; ++j) pts(i, j) = values[static_cast<std::size_t>(i * width + j)];
  return SampleSet(std::move(pts));
}

}  // namespace w2r
