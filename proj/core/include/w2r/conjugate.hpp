#pragma once

#include "w2r/common.hpp"
#include "w2r/potentials.hpp"

#include <map>
#include <optional>
#include <vector>

namespace w2r {

struct ConjugateConfig {
  int max_iter = 200;
  double grad_tol = 1e-7;
  double step_init = 1.0;
  double backtrack_factor = 0.5;
  double armijo_c = 1e-4;
  // Use conjugate_closed_form when the class has one. Plq potentials are then
  // solved through their dual over the piece weights, which is exact at kinks.
  bool use_closed_form = true;
  // Required when the potential is not strongly convex; iterates stay inside.
  std::optional<Box> search_box;

  void validate() const;
};

struct ConjugateResult {
  Vector x_hat;    // ≈ ∇f*(y)
  double value;    // ⟨y, x_hat⟩ - f(x_hat) ≈ f*(y)
  int iters = 0;   // accepted ascent steps; 0 on the closed-form path
  bool converged = false;
};

/// Maximizes ⟨y, x⟩ - f(x) by gradient ascent with Armijo backtracking.
///
/// The trial step of each iteration is the Barzilai-Borwein length from the
/// previous pair of iterates, which backtracking shrinks until the sufficient
/// increase test holds, so the objective never decreases between accepted
/// iterates. Converged means ‖y - ∇f(x_hat)‖ ≤ grad_tol; when a search box is
/// active and binds at termination the flag is false.
ConjugateResult conjugate_argmax(const Potential& f, const Vector& y, const ConjugateConfig& config,
                                 const Vector* start = nullptr);

ConjugateResult conjugate_argmax(const PotentialParams& theta, const Vector& y, const ConjugateConfig& config);
ConjugateResult conjugate_argmax(const PotentialParams& theta, const Vector& y, const ConjugateConfig& config,
                                 const Vector& start);

// Last maximizer per sample index, reused as the next starting point.
class WarmStartCache {
 public:
  const Vector* find(Index sample) const;
  void store(Index sample, Vector x);
  std::size_t size() const noexcept { return points_.size(); }
  void clear() noexcept { points_.clear(); }

 private:
  std::map<Index, Vector> points_;
};

// Solves for every row `indices[k]` of `ys`. Warm starts are read from `cache`
// before any solve and written back afterwards in increasing sample order.
std::vector<ConjugateResult> conjugate_batch(const Potential& f, const Matrix& ys, const std::vector<Index>& indices,
                                             const ConjugateConfig& config, WarmStartCache* cache);

// f(x) + f*(y) - ⟨x, y⟩ with f* from conjugate_argmax.
double fenchel_gap(const PotentialParams& theta, const Vector& x, const Vector& y, const ConjugateConfig& config);

}  // namespace w2r
