#pragma once

#include "w2r_cli/config.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace w2r::cli {

struct SamplePair {
  SampleSet mu;
  SampleSet nu;
};

// Samples described by the config's data keys. Synthetic sources derive
// independent μ and ν seeds from `seed`.
SamplePair make_samples(const ExperimentConfig& config, Index n, Index n_nu, std::uint64_t seed);
SamplePair make_samples(const ExperimentConfig& config);

// Known optimal map ν → μ and the population W2 for the synthetic sources.
struct GroundTruth {
  Matrix linear;   // T(y) = linear·y + offset
  Vector offset;
  double w2 = 0.0;
  SampleSet apply(const SampleSet& ys) const;
};
GroundTruth ground_truth(const ExperimentConfig& config);

// Inner solver settings for evaluation; adds a search box when θ needs one.
ConjugateConfig evaluation_inner(const ExperimentConfig& config, const PotentialParams& theta, const SampleSet& mu,
                                 const SampleSet& nu);

struct BenchmarkRow {
  BenchMethod method;
  Index n = 0;
  Index d = 0;
  std::string epsilon_or_class;
  std::uint64_t seed = 0;
  double map_error = 0.0;
  double w2_error = 0.0;
  double seconds_per_epoch = 0.0;
};

// One row per (method, N, seed) in config order. `progress` receives one line per row.
std::vector<BenchmarkRow> run_benchmark(const ExperimentConfig& config, std::ostream* progress = nullptr);

// `# key=value` lines identifying the run: command, config hash, seed, resolved config.
std::vector<std::string> header_comments(const std::string& command, const ExperimentConfig& config);

// Each command writes its files under config.out and a short summary to `out`.
// Returns the process exit code.
int cmd_generate(const ExperimentConfig& config, std::ostream& out);
int cmd_fit(const ExperimentConfig& config, std::ostream& out);
int cmd_distance(const ExperimentConfig& config, bool symmetric, std::ostream& out);
int cmd_map(const ExperimentConfig& config, std::ostream& out);
int cmd_oracle(const ExperimentConfig& config, std::ostream& out);
int cmd_sinkhorn(const ExperimentConfig& config, std::ostream& out);
int cmd_benchmark(const ExperimentConfig& config, std::ostream& out);

}  // namespace w2r::cli
