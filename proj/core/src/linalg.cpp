#include "w2r/linalg.hpp"

#include <Eigen/Eigenvalues>

namespace w2r::linalg {

Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

double min_eigenvalue(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

Matrix eigen_clamp(const Matrix& a, double floor) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  const Vector lambda = es.eigenvalues().cwiseMax(floor);
  const Matrix& v = es.eigenvectors();
  return symmetrize(v * lambda.asDiagonal() * v.transpose());
}

Matrix sqrt_psd(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Matrix& v = es.eigenvectors();
  return symmetrize(v * root.asDiagonal() * v.transpose());
}

Matrix inv_sqrt_spd(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw ValidationError("inv_sqrt_spd: matrix is not positive definite");
  const Vector inv_root = es.eigenvalues().cwiseSqrt().cwiseInverse();
  const Matrix& v = es.eigenvectors();
  return symmetrize(v * inv_root.asDiagonal() * v.transpose());
}

bool is_symmetric(const Matrix& a, double tol) {
  return a.rows() == a.cols() && (a - a.transpose()).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace w2r::linalg
