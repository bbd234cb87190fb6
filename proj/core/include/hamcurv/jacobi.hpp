#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "hamcurv/flow.hpp"
#include "hamcurv/symplin.hpp"
#include "hamcurv/systems.hpp"

/// Jacobi curves in the Lagrange Grassmannian, derivative curves via the
/// Laurent expansion of the projector family, the generalized curvature
/// R = (S° - S)^{-1} S°' (S° - S)^{-1} S', and the energy-level reduction.
///
/// Graph coordinates: a curve J(t) of Lagrangian subspaces is written as
/// {(x, S_t x)} over a Darboux splitting whose first half is J(0).  The
/// derivative element J°(t) can coincide with the splitting complement
/// (it does for mechanical systems and the vertical distribution), so the
/// complement is re-picked inside the Lagrangian-complement family
/// {(Wy, y) : W symmetric} by conditioning; the curvature at the stencil
/// center is invariant under that choice.
namespace hamcurv::jacobi {

using systems::HamiltonianSystem;
using systems::Metric2D;
using systems::PhasePoint;
using systems::Potential;

/// A Lagrangian distribution: point -> 2n x n frame.
using LagrangianDistribution = std::function<Mat(const PhasePoint&)>;

/// The vertical distribution {(dp, 0)} used by all built-in families.
LagrangianDistribution vertical_distribution(int n);

struct CurvatureConfig {
  double stencil_h = 0.02;      ///< initial half-step, in units of the characteristic time
  double richardson_tol = 1e-6; ///< stop when successive extrapolants agree this well
  double h_floor_factor = 1e-4; ///< smallest h, in units of the characteristic time
  int max_levels = 12;
  int substeps = 16;            ///< integrator steps per stencil half-step
  double cond_limit = 1e8;      ///< graph-coordinate conditioning limit
  double fit_tol = 5e-2;        ///< Laurent-fit cross-validation residual limit
  double clamp_tol = 1e-8;      ///< eigenvalue clamp factor for sqrt(-R)
  double gate_tol = 1e-10;      ///< monotonicity gate signature tolerance
};

/// Sampled Jacobi curve around one center, plus the derivative-curve data
/// filled in by derivative_curve().
struct JacobiCurveData {
  double center = 0.0;
  double h = 0.0;                ///< stencil half-step
  std::vector<double> offsets;   ///< relative sample times (0, ±h, ±2h, ±3h)
  std::vector<Mat> S;            ///< graph coordinates, aligned with offsets
  bool reduced = false;

  // Filled by derivative_curve (in the conditioned splitting; the curvature
  // at the center does not depend on the complement choice):
  Mat S_center;
  Mat S_deriv;       ///< S' at center
  Mat S_circ;        ///< S° at center
  Mat S_circ_deriv;  ///< S°' at center
  double complement_shift = 0.0;  ///< the W = w*I complement parameter used
  double fit_residual = 0.0;      ///< cross-validation residual at ±3h
  double projector_defect = 0.0;  ///< max ||pi0^2 - pi0|| over the centers

  const Mat& S_at(double offset) const;
};

struct CurvatureOperator {
  Mat matrix;
  Mat symmetrized;
  double asym_defect = 0.0;
  enum class Kind { full, reduced } kind = Kind::full;
  Vec eigvals;                    ///< of the symmetrized part, ascending
  double richardson_defect = 0.0; ///< truncation estimate from the last halving
  double stencil_h = 0.0;         ///< accepted stencil half-step

  int dim() const { return static_cast<int>(matrix.rows()); }
};

/// Graph coordinate S_t of the pulled-back distribution at one time, over the
/// Darboux splitting (Lambda_z, complement).  Throws TransversalityError with
/// a conditioning report when the graph coordinate is undefined.
Mat jacobi_coord(const HamiltonianSystem& sys, const PhasePoint& z,
                 const LagrangianDistribution& lambda, double t,
                 const CurvatureConfig& cfg);

/// Sample the full-space Jacobi curve on the stencil {0, ±h, ±2h, ±3h}
/// around `center`.
JacobiCurveData sample_jacobi_curve(const HamiltonianSystem& sys, const PhasePoint& z,
                                    const LagrangianDistribution& lambda, double h,
                                    double center, const CurvatureConfig& cfg);

/// Sample the reduced Jacobi curve (inside Sigma_z) on the same stencil.
JacobiCurveData sample_reduced_curve(const HamiltonianSystem& sys, const PhasePoint& z,
                                     double h, double center, const CurvatureConfig& cfg);

/// Laurent machinery: fit the projector family on the symmetric stencil,
/// extract the free term, solve for the derivative-curve coordinate S° and
/// its time derivative.  Fills the derivative fields of `data`.
void derivative_curve(JacobiCurveData& data, const CurvatureConfig& cfg);

/// The curvature formula, verbatim; records the asymmetry defect.
CurvatureOperator curvature(const Mat& S, const Mat& S_deriv, const Mat& S_circ,
                            const Mat& S_circ_deriv);

/// Full-space curvature of the field w.r.t. the distribution at z, with the
/// stencil auto-tuned by Richardson halving.
CurvatureOperator full_curvature(const HamiltonianSystem& sys, const PhasePoint& z,
                                 const LagrangianDistribution& lambda,
                                 const CurvatureConfig& cfg);

/// Reduced curvature on Sigma_z (the operator the entropy bound consumes).
/// Refuses to run when the monotonicity gate fails (the Gram form of g^h on
/// the reduced distribution is not sign-definite).
CurvatureOperator reduced_curvature(const HamiltonianSystem& sys, const PhasePoint& z,
                                    const CurvatureConfig& cfg);

/// Curve-centered variant: curvature of the reduced Jacobi curve at time
/// t_center (used by the flow-covariance diagnostics).
CurvatureOperator reduced_curvature_at_time(const HamiltonianSystem& sys,
                                            const PhasePoint& z, double t_center,
                                            const CurvatureConfig& cfg);

/// Closed form for mechanical systems: (R, R-hat representative) =
/// (Hess U, Hess U + (3/|p|^2) grad U grad U^T).  Throws at p = 0.
std::pair<Mat, Mat> mechanical_closed_form(const HamiltonianSystem& sys,
                                           const PhasePoint& z);

/// Gauss curvature of a 2D metric from its derivative callbacks (Brioschi).
double gauss_curvature(const Metric2D& metric, const Vec& q);

/// Closed form for 2D geodesic flows: the 1x1 reduced operator
/// [K(q) * |p|^2_{g^{-1}}]  (= K * 2E on the energy-E level).
CurvatureOperator geodesic_closed_form(const Metric2D& metric, const PhasePoint& z);

/// Closed form for mechanical systems on a 2D metric: curvature term plus the
/// covariant Hessian of U and the printed gradient-squared correction, all
/// compressed onto the g-unit reduced direction.  Throws at turning points.
CurvatureOperator mechanical_on_metric_closed_form(const Metric2D& metric,
                                                   const Potential& U,
                                                   const PhasePoint& z);

/// Euclidean compression of an n x n fiber operator onto the (n-1) directions
/// orthogonal to p: the oracle-side restriction used to compare closed forms
/// with the reduced pipeline.  Returns the compressed matrix; its eigenvalues
/// are the comparison invariant.
Mat compress_to_reduced_fiber(const Mat& fiber_op, const Vec& p);

/// Canonical moving frame e(t) of the reduced curve on a uniform grid:
/// columns satisfy e'' = -R e with {e, e'} Darboux (in this toolkit's sign
/// convention sigma(e_i, e'_j) = -delta_ij).
struct MovingFrame {
  std::vector<double> times;
  std::vector<Mat> e;       ///< frame columns in Sigma coordinates
  std::vector<Mat> R;       ///< curve curvature at the grid times
};
MovingFrame canonical_moving_frame(const HamiltonianSystem& sys, const PhasePoint& z,
                                   double t_max, int grid_points,
                                   const CurvatureConfig& cfg);

}  // namespace hamcurv::jacobi
