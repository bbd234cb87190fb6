#pragma once

#include <Eigen/Dense>

namespace hamcurv {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

/// Frobenius norm of the antisymmetric part.
inline double asym_defect(const Mat& m) {
  return 0.5 * (m - m.transpose()).norm();
}

/// Orthonormal basis of the null space of `rows` (treated as row constraints).
/// `keep` is the expected nullity; throws if the rank structure disagrees.
Mat nullspace_onb(const Mat& rows, int keep, double tol = 1e-10);

/// Orthonormalize columns (thin QR with sign fixed so diag(R) >= 0).
Mat orthonormalize(const Mat& frame);

/// Condition number estimate from singular values.
double cond2(const Mat& m);

}  // namespace hamcurv
