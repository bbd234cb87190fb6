#pragma once

#include <optional>
#include <tuple>

#include "hamcurv/errors.hpp"
#include "hamcurv/linalg.hpp"

/// Finite-dimensional symplectic linear algebra: forms, Lagrangian subspaces,
/// transversal projectors, Darboux completions and the g^h Gram form.
///
/// Sign convention, fixed once for the whole toolkit: with z = (p, q) stacked
/// momenta-first,
///     sigma((p,q),(p',q')) = <p,q'> - <p',q>,
/// i.e. the form matrix is Omega = [[0, I],[-I, 0]].  The Hamiltonian vector
/// field is then vf = Omega^{-1} grad h = (-dh/dq, dh/dp); for h = |p|^2/2
/// this gives (0, p).  A convention test asserts exactly that.
namespace hamcurv::symplin {

struct SymplecticSpace {
  int dim_half = 0;  ///< n; the space has dimension 2n
  Mat form;          ///< 2n x 2n antisymmetric nondegenerate

  int dim() const { return 2 * dim_half; }
  double sigma(const Vec& v, const Vec& w) const { return v.dot(form * w); }

  /// Standard Darboux space of half-dimension n.
  static SymplecticSpace standard(int n);

  /// General space with a caller-supplied form (validated).
  static SymplecticSpace general(const Mat& form, double tol = 1e-10);
};

/// Alias for the operation named in the interface docs.
inline SymplecticSpace standard_form(int n) { return SymplecticSpace::standard(n); }

struct LagrangianSubspace {
  Mat frame;                      ///< 2n x k, full column rank, orthonormalized
  std::optional<Mat> graph_coord; ///< k x k symmetric S when {(x, Sx)}

  static LagrangianSubspace from_frame(const SymplecticSpace& space, const Mat& frame,
                                       double tol = 1e-10);
};

struct GramForm {
  Mat matrix;  ///< k x k symmetric
  int n_plus = 0, n_minus = 0, n_zero = 0;

  bool positive_definite() const { return n_minus == 0 && n_zero == 0; }
  bool sign_definite() const { return n_zero == 0 && (n_plus == 0 || n_minus == 0); }
  std::tuple<int, int, int> signature() const { return {n_plus, n_minus, n_zero}; }
};

/// True iff the frame spans a Lagrangian subspace (isotropic, rank n).
/// Throws DegenerateFrameError on rank-deficient input.
bool is_lagrangian(const SymplecticSpace& space, const Mat& frame, double tol = 1e-10);

/// Projector onto `onto` parallel to `parallel`.  The two frames together
/// must span the space; otherwise TransversalityError reports the defect.
Mat projector(const SymplecticSpace& space, const Mat& onto, const Mat& parallel,
              double tol = 1e-8);

/// Gram matrix of g^h(X,Y) = sigma([vf,X],Y) on the columns of `frame`,
/// with the bracket of a chart-constant frame evaluated as -(D vf) X, i.e.
/// from the Hessian of h alone.  Degeneracy is reported via the signature.
GramForm gram_gh(const SymplecticSpace& space, const Mat& hess_h, const Mat& frame,
                 double tol = 1e-10);

/// Completes a Lagrangian frame to a Darboux basis [L | C] with
/// sigma(l_i, c_j) = delta_ij and C isotropic.  Throws on non-Lagrangian input.
Mat darboux_complete(const SymplecticSpace& space, const Mat& lagrangian_frame,
                     double tol = 1e-8);

}  // namespace hamcurv::symplin
