#pragma once

#include "w2r/potentials.hpp"
#include "w2r/solver.hpp"

#include <filesystem>
#include <string>

namespace w2r {

/// Checkpoint JSON layout (field names are stable):
///
///   {
///     "format": "w2restrict-checkpoint", "version": 1,
///     "class_tag": "quadratic" | "ball_linear" | "cone_combo" | "plq" | "icnn",
///     "dim": d, "eta": η, "eps_spd": ε,
///     ...class fields...,
///     "history": [{"epoch", "objective", "grad_norm", "seconds"}]   (optional)
///   }
///
/// Matrices are {"rows": r, "cols": c, "data": [row-major values]}, vectors
/// are plain arrays. Class fields:
///   quadratic   "a", "b"
///   ball_linear "w", "radius"
///   plq         "pieces": [{"a", "b", "c"}]
///   cone_combo  "alphas", "basis": [nested quadratic or plq objects]
///   icnn        "layers": [{"activation", "w", "a", "b"}]
/// Doubles are written with round-trip precision, so loading is value-exact.
std::string params_to_json(const PotentialParams& theta, int indent = 2);
PotentialParams params_from_json(const std::string& text);

void save_checkpoint(const PotentialParams& theta, const std::filesystem::path& path);
void save_checkpoint(const FitResult& result, const std::filesystem::path& path);

PotentialParams load_checkpoint(const std::filesystem::path& path);
// Throws ValidationError when the stored class differs from `expected_tag`.
PotentialParams load_checkpoint(const std::filesystem::path& path, std::string_view expected_tag);

}  // namespace w2r
