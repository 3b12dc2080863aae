#pragma once

#include "w2r/conjugate.hpp"
#include "w2r/distributions.hpp"
#include "w2r/potentials.hpp"
#include "w2r/solver.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace w2r {

struct W2fReport {
  double w2f_squared = 0.0;
  double w2f = 0.0;  // sqrt(max(w2f_squared, 0))
  double self_term_mu = 0.0;  // ½ mean ‖xᵢ‖²
  double self_term_nu = 0.0;  // ½ mean ‖yⱼ‖²
  double objective = 0.0;     // J̃(θ̄)
  bool clamped = false;       // w2f_squared < 0 was clamped to zero
  bool solver_warning = false;  // w2f_squared < -1e-6
};

// ½E‖X‖² + ½E‖Y‖² − J̃(θ̄) on the empirical measures.
W2fReport w2f_squared(const PotentialParams& theta_bar, const SampleSet& s_mu, const SampleSet& s_nu,
                      const ConjugateConfig& inner);

struct SymmetricW2f {
  double forward = 0.0;   // W2F(μ, ν)
  double backward = 0.0;  // W2F(ν, μ)
  double total = 0.0;
};

// Fits θ̄ in both directions and sums the two distances.
SymmetricW2f w2f_symmetric(const ClassSpec& spec, const SampleSet& s_mu, const SampleSet& s_nu,
                           const TrainConfig& config, const ConjugateConfig& inner);

struct TransportMap {
  SampleSet image;          // row j = ∇f*(yⱼ; θ̄)
  Index nonconverged = 0;   // rows whose inner solve did not converge
};

// Approximate transport map from ν to μ evaluated at the rows of `s_nu`.
TransportMap transport_map(const PotentialParams& theta_bar, const SampleSet& s_nu, const ConjugateConfig& inner);

struct MomentRow {
  std::string statistic;
  double mu_value = 0.0;
  double push_value = 0.0;
  double residual = 0.0;  // |mu_value - push_value|
};

/// Compares statistics of μ̂ and T#ν̂: mean[i] for every class, cov[i,j]
/// (i ≤ j) for every class except BallLinear, and basis[m] = E f_m for
/// ConeCombo, whose basis spans the tangent space at every θ.
std::vector<MomentRow> moment_match_report(const PotentialParams& theta_bar, const SampleSet& s_mu,
                                           const SampleSet& s_nu, const ConjugateConfig& inner);

// Largest residual among rows whose statistic name starts with `prefix`.
double max_residual(const std::vector<MomentRow>& rows, std::string_view prefix);

void write_moment_csv(const std::vector<MomentRow>& rows, const std::filesystem::path& path,
                      const std::vector<std::string>& comments = {});

// W2 between Gaussians under the cost ½‖x − y‖² (half the usual Bures value squared).
double gaussian_w2_closed_form(const GaussianSpec& mu, const GaussianSpec& nu);

}  // namespace w2r
