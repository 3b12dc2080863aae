#pragma once

#include "w2r/conjugate.hpp"
#include "w2r/distributions.hpp"
#include "w2r/potentials.hpp"

#include <optional>
#include <string>
#include <vector>

namespace w2r {

enum class PotentialClass { quadratic, ball_linear, cone_combo, plq, icnn };

std::string_view to_string(PotentialClass c);
PotentialClass potential_class_from_string(std::string_view name);

struct IcnnArchitecture {
  std::vector<Index> widths{64, 128, 64};
  Activation first_activation = Activation::relu_squared;
  Activation hidden_activation = Activation::relu;
  double eta = 0.0;
};

// Which parametrized class to fit, plus the fixed (untrained) data it needs.
struct ClassSpec {
  PotentialClass kind = PotentialClass::quadratic;
  IcnnArchitecture icnn;
  double radius = 1.0;               // ball_linear
  Index plq_pieces = 2;              // plq
  std::vector<BasisFunction> basis;  // cone_combo
  double eps_spd = kDefaultEpsSpd;
  // Use the exact minimizer instead of SGD where one exists (quadratic, ball_linear).
  bool prefer_closed_form = true;
};

/// Starting point θ₀ for training.
///
/// Quadratic (I, 0); BallLinear w = 0; ConeCombo α = 1/M; Plq pieces (I, b_m, 0)
/// with b_m ~ N(0, 0.1²) to break the tie between pieces. Icnn embeds the
/// identity potential ½‖x‖² along one path through the network (see
/// make_identity_icnn) and fills the remaining units with small random
/// weights: nonnegative hidden weights U(0, 2/fan_in), input weights
/// N(0, 1/d), output weights U(0, 1e-3).
PotentialParams initial_params(const ClassSpec& spec, Index dim, std::uint64_t seed);

struct StepSchedule {
  // η for epoch k is values[min(k, size-1)] / (1 + decay·k).
  std::vector<double> values{1e-3};
  double decay = 0.0;

  double at(int epoch) const;
};

struct TrainConfig {
  int epochs = 400;
  StepSchedule step;
  std::vector<Index> batch_sizes{64};  // per epoch, last value repeats
  ConjugateConfig inner;
  std::uint64_t seed = 0;
  int eval_every = 50;  // epochs between full-data objective estimates
  std::optional<Box> search_box;

  Index batch_at(int epoch) const;
  void validate() const;
};

struct HistoryPoint {
  int epoch = 0;
  double objective = 0.0;  // J̃ on the full samples
  double grad_norm = 0.0;  // mean ‖u‖ over the epoch's steps
  double seconds = 0.0;    // wall time since fit start
};

struct FitResult {
  PotentialParams theta_bar;
  std::vector<HistoryPoint> history;
  double wall_time_seconds = 0.0;
  double seconds_per_epoch = 0.0;
  long long inner_iteration_total = 0;
  long long inner_nonconverged = 0;
};

// Raised when training produces a non-finite objective or parameter vector.
class FitDivergenceError : public DivergenceError {
 public:
  FitDivergenceError(const std::string& what, PotentialParams last_good, int epoch)
      : DivergenceError(what), last_good_(std::move(last_good)), epoch_(epoch) {}

  const PotentialParams& last_good() const noexcept { return last_good_; }
  int epoch() const noexcept { return epoch_; }

 private:
  PotentialParams last_good_;
  int epoch_;
};

// Bounding box of both sample sets, padded on each side by max(1, 2·extent).
// Used as the conjugate search region when θ is not strongly convex.
Box default_search_box(const SampleSet& a, const SampleSet& b);

// J̃(θ) = mean f(xᵢ) + mean f*(yⱼ).
double estimate_objective(const PotentialParams& theta, const SampleSet& s_mu, const SampleSet& s_nu,
                          const ConjugateConfig& inner);

/// Unbiased estimate of ∇_θ J̃: mean ∂f/∂θ(Xᵢ) − mean ∂f/∂θ(X̂ⱼ) with
/// X̂ⱼ ≈ ∇f*(Yⱼ). Averaged rather than summed, so step sizes do not depend on
/// the batch size. `warm` is keyed by row index of `batch_y`.
ParamGradient stochastic_gradient(const PotentialParams& theta, const SampleSet& batch_x, const SampleSet& batch_y,
                                  const ConjugateConfig& inner, WarmStartCache* warm = nullptr);

/// Projected SGD on θ.
///
/// One epoch is a pass over the data: both sample sets are shuffled and
/// consumed in ⌈max(N, N′)/M⌉ minibatches (the shorter set wraps around).
/// After each step θ ← project_feasible(θ − η u). Deterministic given the seed.
FitResult fit(const ClassSpec& spec, const SampleSet& s_mu, const SampleSet& s_nu, const TrainConfig& config);

// Continues training from `theta` for `epochs` more epochs (0 returns θ unchanged).
FitResult resume(const PotentialParams& theta, const SampleSet& s_mu, const SampleSet& s_nu, const TrainConfig& config,
                 int epochs);

struct QuadraticFit {
  Matrix a_bar;
  Vector b_bar;
  double min_value = 0.0;
  bool clamped = false;  // an empirical covariance was lifted to eps_spd

  Quadratic params(double eps_spd = kDefaultEpsSpd) const;
};

// Exact minimizer of J̃ over the quadratic class on empirical moments.
QuadraticFit fit_quadratic_closed_form(const SampleSet& s_mu, const SampleSet& s_nu,
                                       double eps_spd = kDefaultEpsSpd);

// Exact minimizer over the ball-linear class: the mean difference projected onto the ball.
Vector fit_ball_linear_closed_form(const SampleSet& s_mu, const SampleSet& s_nu, double radius);

// Closed form when the spec allows it, otherwise fit(...).theta_bar.
PotentialParams fit_potential(const ClassSpec& spec, const SampleSet& s_mu, const SampleSet& s_nu,
                              const TrainConfig& config);

}  // namespace w2r
