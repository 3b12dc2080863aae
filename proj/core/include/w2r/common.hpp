#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace w2r {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Violated precondition on user-supplied values (shapes, SPD-ness, ranges).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed file contents. Carries the 1-based line number when one applies.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line_(line) {}
  explicit ParseError(const std::string& what) : ParseError(what, 0) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// An iterative routine produced non-finite values.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Axis-aligned search region used to keep conjugate maximizers bounded.
struct Box {
  Vector lo;
  Vector hi;

  static Box cube(Index dim, double half_width) {
    return Box{Vector::Constant(dim, -half_width), Vector::Constant(dim, half_width)};
  }

  Index dim() const { return lo.size(); }

  Vector clamp(const Vector& x) const { return x.cwiseMax(lo).cwiseMin(hi); }

  bool contains(const Vector& x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }

  void validate() const {
    if (lo.size() != hi.size() || lo.size() == 0)
      throw ValidationError("Box: lo/hi must be non-empty and of equal size");
    if (!(lo.array() <= hi.array()).all())
      throw ValidationError("Box: lo must not exceed hi");
  }
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace w2r
