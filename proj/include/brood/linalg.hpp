#pragma once

// Small dense Cholesky helpers used by the BGe score.

#include <cmath>

#include <Eigen/Dense>

#include "brood/error.hpp"

namespace brood {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Pivots at or below this are treated as a loss of positive definiteness.
inline constexpr double kPivotFloor = 1e-12;

/// Returns the Cholesky factor of L L^T + v v^T given the lower factor L, in O(n^2).
inline Matrix chol_rank1_update(Matrix l, Vector v) {
  require(l.rows() == l.cols() && l.rows() == v.size(), "chol_rank1_update: dimension mismatch");
  const Eigen::Index n = l.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double lkk = l(k, k);
    if (!(lkk > kPivotFloor)) throw RuntimeError("chol_rank1_update: factor is not positive definite");
    const double r = std::hypot(lkk, v(k));
    const double c = r / lkk;
    const double s = v(k) / lkk;
    l(k, k) = r;
    for (Eigen::Index i = k + 1; i < n; ++i) {
      l(i, k) = (l(i, k) + s * v(i)) / c;
      v(i) = c * v(i) - s * l(i, k);
    }
  }
  if (!l.allFinite()) throw RuntimeError("chol_rank1_update: non-finite result");
  return l;
}

/// Extends the factor of A to the factor of [[A, b], [b^T, d]] by bordering.
/// Returns false if the new pivot is not positive.
inline bool chol_append(Matrix& l, const Vector& b, double d) {
  const Eigen::Index n = l.rows();
  Vector c = n > 0 ? Vector(l.triangularView<Eigen::Lower>().solve(b)) : Vector();
  const double pivot2 = d - c.squaredNorm();
  if (!(pivot2 > kPivotFloor * std::max(1.0, std::abs(d)))) return false;
  Matrix out = Matrix::Zero(n + 1, n + 1);
  out.topLeftCorner(n, n) = l;
  out.block(n, 0, 1, n) = c.transpose();
  out(n, n) = std::sqrt(pivot2);
  l = std::move(out);
  return true;
}

}  // namespace brood
