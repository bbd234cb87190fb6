#include "hamcurv/symplin.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <string>

namespace hamcurv {

Mat nullspace_onb(const Mat& rows, int keep, double tol) {
  Eigen::JacobiSVD<Mat> svd(rows, Eigen::ComputeFullV);
  const int cols = static_cast<int>(rows.cols());
  const auto& sv = svd.singularValues();
  const double scale = sv.size() > 0 ? sv(0) : 0.0;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > tol * std::max(scale, 1.0)) ++rank;
  if (cols - rank != keep)
    throw DegenerateFrameError("nullspace dimension " + std::to_string(cols - rank) +
                               ", expected " + std::to_string(keep));
  return svd.matrixV().rightCols(keep);
}

Mat orthonormalize(const Mat& frame) {
  Eigen::HouseholderQR<Mat> qr(frame);
  Mat q = qr.householderQ() * Mat::Identity(frame.rows(), frame.cols());
  Mat r = qr.matrixQR().topRows(frame.cols()).triangularView<Eigen::Upper>();
  for (int j = 0; j < frame.cols(); ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

double cond2(const Mat& m) {
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(sv.size() - 1) == 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / sv(sv.size() - 1);
}

}  // namespace hamcurv

namespace hamcurv::symplin {

SymplecticSpace SymplecticSpace::standard(int n) {
  if (n < 1) throw DegenerateFrameError("symplectic space needs n >= 1");
  Mat form = Mat::Zero(2 * n, 2 * n);
  form.topRightCorner(n, n) = Mat::Identity(n, n);
  form.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
  return SymplecticSpace{n, std::move(form)};
}

SymplecticSpace SymplecticSpace::general(const Mat& form, double tol) {
  const int d = static_cast<int>(form.rows());
  if (d % 2 != 0 || form.cols() != d)
    throw DegenerateFrameError("symplectic form must be square of even dimension");
  if ((form + form.transpose()).norm() > tol * std::max(form.norm(), 1.0))
    throw DegenerateFrameError("symplectic form must be antisymmetric");
  if (cond2(form) > 1.0 / tol)
    throw DegenerateFrameError("symplectic form is numerically degenerate");
  return SymplecticSpace{d / 2, form};
}

LagrangianSubspace LagrangianSubspace::from_frame(const SymplecticSpace& space,
                                                  const Mat& frame, double tol) {
  if (!is_lagrangian(space, frame, tol))
    throw DegenerateFrameError("frame is not Lagrangian");
  return LagrangianSubspace{orthonormalize(frame), std::nullopt};
}

bool is_lagrangian(const SymplecticSpace& space, const Mat& frame, double tol) {
  if (frame.rows() != space.dim())
    throw DegenerateFrameError("frame row dimension mismatch");
  Eigen::JacobiSVD<Mat> svd(frame);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) <= tol * std::max(sv(0), 1.0))
    throw DegenerateFrameError("rank-deficient frame");
  if (frame.cols() != space.dim_half) return false;
  const Mat pairings = frame.transpose() * space.form * frame;
  const double scale = frame.colwise().norm().maxCoeff();
  return pairings.cwiseAbs().maxCoeff() <= tol * std::max(scale * scale, 1.0);
}

Mat projector(const SymplecticSpace& space, const Mat& onto, const Mat& parallel,
              double tol) {
  const int d = space.dim();
  if (onto.cols() + parallel.cols() != d)
    throw TransversalityError("onto/parallel frames do not span the space",
                              d - static_cast<int>(onto.cols() + parallel.cols()));
  Mat b(d, d);
  b << onto, parallel;
  Eigen::JacobiSVD<Mat> svd(b);
  const auto& sv = svd.singularValues();
  int defect = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) <= tol * sv(0)) ++defect;
  if (defect > 0)
    throw TransversalityError("onto/parallel pair not transversal (defect dimension " +
                                  std::to_string(defect) + ")",
                              defect);
  Mat d_sel = Mat::Zero(d, d);
  d_sel.topLeftCorner(onto.cols(), onto.cols()) = Mat::Identity(onto.cols(), onto.cols());
  return b * d_sel * b.inverse();
}

GramForm gram_gh(const SymplecticSpace& space, const Mat& hess_h, const Mat& frame,
                 double tol) {
  // [vf, X] = -(D vf) X  for a chart-constant extension of X.
  const Mat dvf = space.form.inverse() * hess_h;
  const Mat bracket = -(dvf * frame);
  GramForm g;
  g.matrix = symmetrize(bracket.transpose() * space.form * frame);
  Eigen::SelfAdjointEigenSolver<Mat> es(g.matrix);
  const double scale = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1.0);
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    const double ev = es.eigenvalues()(i);
    if (ev > tol * scale)
      ++g.n_plus;
    else if (ev < -tol * scale)
      ++g.n_minus;
    else
      ++g.n_zero;
  }
  return g;
}

Mat darboux_complete(const SymplecticSpace& space, const Mat& lagrangian_frame,
                     double tol) {
  if (!is_lagrangian(space, lagrangian_frame, std::max(tol, 1e-10)))
    throw DegenerateFrameError("darboux_complete needs a Lagrangian frame");
  const Mat l = orthonormalize(lagrangian_frame);
  const Mat& om = space.form;
  const Mat d = om.transpose() * l;
  const Mat gram = d.transpose() * d;
  Mat c0 = d * gram.inverse();
  const Mat k = c0.transpose() * om * c0;  // antisymmetric residual
  Mat c = c0 + l * (0.5 * k);
  Mat basis(space.dim(), space.dim());
  basis << l, c;
  return basis;
}

}  // namespace hamcurv::symplin
