#pragma once

#include "w2r/distributions.hpp"
#include "w2r/solver.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace w2r::cli {

// Bad flags, unknown keys or invalid values. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DataSource { canonical, gaussian, files };

enum class BenchMethod { restricted_icnn, restricted_quadratic, sinkhorn_barycentric };

std::string_view to_string(BenchMethod m);

// Fully resolved experiment settings. Every field maps to one flat JSON key;
// see default_config_json() for the key names and defaults.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = ".";

  DataSource data = DataSource::canonical;
  Index n = 1000;
  Index n_nu = 1000;
  std::filesystem::path mu_path;
  std::filesystem::path nu_path;
  GaussianSpec mu_gaussian;
  GaussianSpec nu_gaussian;
  double mixture_spread = 2.0;
  double mixture_var = 0.25;
  Matrix affine_a;
  Vector affine_b;

  ClassSpec class_spec;
  TrainConfig train;
  ConjugateConfig eval_inner;
  std::optional<double> box_half_width;
  std::filesystem::path checkpoint;

  double epsilon = 0.1;
  int sinkhorn_iters = 5000;
  double sinkhorn_tol = 1e-9;
  bool write_coupling = false;

  std::vector<Index> bench_n;
  int bench_seeds = 5;
  std::vector<BenchMethod> bench_methods;

  // Canonical JSON of every key except "out"; hashed into output headers.
  std::string resolved_json;
  std::uint64_t config_hash = 0;
};

// Every recognised key with its default value, as pretty-printed JSON.
std::string default_config_json();

/// Merges defaults ← config file (if any) ← `--set key=value` overrides ←
/// explicit seed/out flags, then validates. Values given to --set are parsed
/// as JSON and fall back to plain strings.
ExperimentConfig resolve_config(const std::optional<std::filesystem::path>& config_file,
                                const std::vector<std::pair<std::string, std::string>>& overrides,
                                std::optional<std::uint64_t> seed, std::optional<std::filesystem::path> out);

std::uint64_t fnv1a64(std::string_view text);

}  // namespace w2r::cli
