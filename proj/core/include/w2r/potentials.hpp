#pragma once

#include "w2r/common.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace w2r {

inline constexpr double kDefaultEpsSpd = 1e-6;

// f(x) = ½xᵀAx + bᵀx with A SPD.
struct Quadratic {
  Matrix a;
  Vector b;
  double eps_spd = kDefaultEpsSpd;
};

// f(x) = ½‖x‖² + wᵀx with ‖w‖ ≤ radius.
struct BallLinear {
  Vector w;
  double radius = 1.0;
};

struct PlqPiece {
  Matrix a;
  Vector b;
  double c = 0.0;
};

// f(x) = max_m ½xᵀA_m x + b_mᵀx + c_m.
struct Plq {
  std::vector<PlqPiece> pieces;
  double eps_spd = kDefaultEpsSpd;
};

using BasisFunction = std::variant<Quadratic, Plq>;

// f(x) = Σ_m α_m f_m(x) with α ≥ 0 over a fixed convex basis. Only α is trained.
struct ConeCombo {
  Vector alphas;
  std::vector<BasisFunction> basis;
};

enum class Activation { relu, relu_squared, softplus, linear };

std::string_view to_string(Activation act);
Activation activation_from_string(std::string_view name);

// One layer of h_{ℓ+1} = σ(W h_ℓ + A x + b). `w` has zero columns on the first
// layer; the final layer has a single output unit.
struct IcnnLayer {
  Matrix w;
  Matrix a;
  Vector b;
  Activation activation = Activation::relu;

  Index width() const { return b.size(); }
};

// Input-convex network f(x) = h_L(x) + η/2‖x‖².
struct Icnn {
  std::vector<IcnnLayer> layers;
  double eta = 0.0;
};

using PotentialParams = std::variant<Quadratic, BallLinear, ConeCombo, Plq, Icnn>;

std::string_view class_tag(const PotentialParams& theta);
Index input_dim(const PotentialParams& theta);

// Named contiguous slice of the flat parameter vector.
struct ParamBlock {
  std::string name;
  Index offset = 0;
  Index size = 0;
};

// ∂f/∂θ laid out like `flatten(theta)`.
struct ParamGradient {
  Vector flat;
  std::vector<ParamBlock> blocks;
};

// Trainable parameters in a fixed order: matrices row-major, then vectors.
// Quadratic: a, b. BallLinear: w. ConeCombo: alphas. Plq: per piece a, b, c.
// Icnn: per layer w, a, b. Fixed data (radius, basis, eta, eps_spd) is excluded.
Vector flatten(const PotentialParams& theta);
PotentialParams unflatten(const PotentialParams& like, const Vector& flat);
std::vector<ParamBlock> param_blocks(const PotentialParams& theta);
Index param_count(const PotentialParams& theta);

bool is_feasible(const PotentialParams& theta);
// Throws ValidationError describing the first violated constraint.
void validate_feasible(const PotentialParams& theta);

/// Evaluation handle over a potential known to be feasible.
///
/// The constructor validates once; the accessors then skip the check, which
/// matters in inner loops that evaluate the same θ thousands of times.
/// Holds a reference: the parameters must outlive the handle.
class Potential {
 public:
  explicit Potential(const PotentialParams& theta);
  // Skips validation. Used by diagnostics that must run on infeasible θ.
  static Potential unchecked(const PotentialParams& theta);

  const PotentialParams& params() const noexcept { return *theta_; }
  Index dim() const noexcept { return dim_; }

  double value(const Vector& x) const;
  Vector gradient(const Vector& x) const;
  double value_and_gradient(const Vector& x, Vector& grad) const;

  // Column k of `xs` is one input; fills values(k) and grads.col(k).
  void value_and_gradient_batch(const Matrix& xs, Vector& values, Matrix& grads) const;

  // flat += weight · ∂f/∂θ(x), flat sized param_count().
  void accumulate_param_gradient(const Vector& x, double weight, Vector& flat) const;
  // flat += Σ_k weights(k) · ∂f/∂θ(xs.col(k)).
  void accumulate_param_gradient_batch(const Matrix& xs, const Vector& weights, Vector& flat) const;
  ParamGradient param_gradient(const Vector& x) const;

 private:
  struct NoCheck {};
  Potential(const PotentialParams& theta, NoCheck);

  const PotentialParams* theta_;
  Index dim_;
};

double eval(const PotentialParams& theta, const Vector& x);
// Subgradient at kinks: lowest-index active piece for Plq, σ'(0) = 0 for relu.
Vector grad_x(const PotentialParams& theta, const Vector& x);
ParamGradient grad_params(const PotentialParams& theta, const Vector& x);

PotentialParams project_feasible(const PotentialParams& theta);

// max over random (x₁, x₂, λ) in `box` of f(λx₁+(1-λ)x₂) - λf(x₁) - (1-λ)f(x₂).
// Runs without a feasibility check so it can expose non-convex parameters.
double convexity_probe(const PotentialParams& theta, std::uint64_t seed, Index trials, const Box& box);

struct ConjugatePoint {
  double value;
  Vector argmax;
};

// f*(y) and ∇f*(y) for the Quadratic and BallLinear classes; nullopt otherwise.
std::optional<ConjugatePoint> conjugate_closed_form(const PotentialParams& theta, const Vector& y);

double strong_convexity_modulus(const PotentialParams& theta);

// Single-layer network with f(x) = ½‖x‖²: weights ½, input map [I; -I], relu².
Icnn make_identity_icnn(Index dim);

}  // namespace w2r
