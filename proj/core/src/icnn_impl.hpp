#pragma once

#include "w2r/potentials.hpp"

namespace w2r::icnn {

// Forward pass that keeps the pre-activations for reverse accumulation.
struct Tape {
  std::vector<Vector> z;  // pre-activation per layer
  std::vector<Vector> h;  // h[0] is empty, h[ℓ+1] = σ(z[ℓ])
};

double forward(const Icnn& net, const Vector& x, Tape* tape);
double value_and_gradient(const Icnn& net, const Vector& x, Vector& grad);
void accumulate_param_gradient(const Icnn& net, const Vector& x, double weight, double* flat);

// Columns of `xs` are inputs; `grads` receives one gradient per column.
void value_and_gradient_batch(const Icnn& net, const Matrix& xs, Vector& values, Matrix& grads);
// flat += Σ_k weights(k) · ∂f/∂θ(xs.col(k)).
void accumulate_param_gradient_batch(const Icnn& net, const Matrix& xs, const Vector& weights, double* flat);

Index param_count(const Icnn& net);
void validate(const Icnn& net);

}  // namespace w2r::icnn
