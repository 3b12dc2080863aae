#pragma once

#include "w2r/common.hpp"
#include "w2r/distributions.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace w2r {

// Dense N×N problems above this size are refused.
inline constexpr Index kMaxDenseSamples = 20000;

// Pairwise costs ½‖xᵢ − yⱼ‖².
Matrix half_sq_cost_matrix(const SampleSet& s_mu, const SampleSet& s_nu);

struct Assignment {
  double w2_squared = 0.0;  // (1/N) Σ ½‖xᵢ − y_σ(i)‖²
  double w2 = 0.0;
  std::vector<Index> permutation;  // σ(i)
};

// Exact W2 between equal-size uniform empirical measures (Hungarian algorithm, O(N³)).
Assignment exact_w2_assignment(const SampleSet& s_mu, const SampleSet& s_nu);

// Minimal (1/N) Σ ½‖xᵢ − y_σ(i)‖² over all N! permutations. Refuses N > 8.
double brute_force_w2_squared(const SampleSet& s_mu, const SampleSet& s_nu);

struct Coupling {
  Matrix matrix;       // πᵢⱼ, rows indexed by μ samples
  double value = 0.0;  // Σ πᵢⱼ ½‖xᵢ − yⱼ‖²
};

struct SinkhornResult {
  Coupling coupling;
  double marginal_violation = 0.0;  // max over both marginals of |Σ π − 1/N|
  double seconds_per_sweep = 0.0;
  int sweeps = 0;
  // Filled when tracking is requested: one entry per sweep.
  std::vector<double> value_history;
  std::vector<double> violation_history;
};

/// Entropic OT in the log domain. One sweep updates the row potential then the
/// column potential, so columns are exactly balanced after every sweep and the
/// reported violation is the row imbalance. With tol > 0 the loop stops early
/// once that imbalance is at most tol; `iters` is then an upper bound.
SinkhornResult sinkhorn(const SampleSet& s_mu, const SampleSet& s_nu, double epsilon, int iters,
                        bool track_history = false, double tol = 0.0);

// Row i = Σⱼ πᵢⱼ yⱼ / Σⱼ πᵢⱼ, the conditional mean of ν given xᵢ.
SampleSet barycentric_map(const Coupling& coupling, const SampleSet& s_mu, const SampleSet& s_nu);

// Mean over rows of ‖estimated_i − reference_i‖₂.
double map_error(const SampleSet& estimated, const SampleSet& reference);

void write_coupling_csv(const Coupling& coupling, const std::filesystem::path& path,
                        const std::vector<std::string>& comments = {});

}  // namespace w2r
