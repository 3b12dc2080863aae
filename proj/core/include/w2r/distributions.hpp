#pragma once

#include "w2r/common.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace w2r {

/// Uniformly weighted point cloud: the empirical measure (1/N) Σ δ_{xᵢ}.
///
/// Rows of `points()` are samples. Construction enforces N ≥ 1, d ≥ 1 and
/// finite entries, so every SampleSet in circulation is valid.
class SampleSet {
 public:
  explicit SampleSet(Matrix points);

  const Matrix& points() const noexcept { return points_; }
  Index count() const noexcept { return points_.rows(); }
  Index dim() const noexcept { return points_.cols(); }
  Vector row(Index i) const { return points_.row(i).transpose(); }

  // Rows selected by `indices`, in order.
  SampleSet subset(const std::vector<Index>& indices) const;

  friend bool operator==(const SampleSet& a, const SampleSet& b) {
    return a.points_.rows() == b.points_.rows() && a.points_.cols() == b.points_.cols() &&
           a.points_ == b.points_;
  }

 private:
  Matrix points_;
};

struct GaussianSpec {
  Vector mean;
  Matrix covariance;

  Index dim() const { return mean.size(); }
  // Throws ValidationError unless the covariance is symmetric (1e-12) and SPD.
  void validate() const;
};

struct MixtureComponent {
  double weight;
  GaussianSpec spec;
};

struct MixtureSpec {
  std::vector<MixtureComponent> components;

  Index dim() const;
  void validate() const;
};

struct Moments {
  Vector mean;
  Matrix covariance;  // population convention: divide by N
};

SampleSet sample_gaussian(const GaussianSpec& spec, Index n, std::uint64_t seed);
SampleSet sample_mixture(const MixtureSpec& spec, Index n, std::uint64_t seed);

// 1-D samples at -v with probability 1/2 - alpha and +v with probability 1/2 + alpha.
SampleSet sample_two_point(double v, double alpha, Index n, std::uint64_t seed);

Moments empirical_moments(const SampleSet& s);

// Row i becomes a·xᵢ + b.
SampleSet affine_pushforward(const SampleSet& s, const Matrix& a, const Vector& b);

struct CsvOptions {
  bool header = false;               // emit an `x0,x1,...` row
  std::vector<std::string> comments; // each written as a `# ...` line first
};

void save_csv(const SampleSet& s, const std::filesystem::path& path, const CsvOptions& opts = {});

// Skips blank lines and `#` comments, tolerates an optional `x0,...` header.
SampleSet load_csv(const std::filesystem::path& path);

}  // namespace w2r
