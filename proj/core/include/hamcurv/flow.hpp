#pragma once

#include <vector>

#include "hamcurv/systems.hpp"

/// Time integration of the Hamiltonian flow and its linearization, plus the
/// reduction of tangent vectors to the transverse space
/// Sigma_z = ker(d_z h) / span{vf(z)}.
namespace hamcurv::flow {

using systems::HamiltonianSystem;
using systems::PhasePoint;

enum class Scheme { stormer_verlet, implicit_midpoint };

struct IntegratorConfig {
  Scheme scheme = Scheme::implicit_midpoint;
  double dt = 1e-3;
  double newton_tol = 1e-12;
  int newton_max_iter = 25;
};

/// One symplectic step.  stormer_verlet requires a separable (mechanical)
/// Hamiltonian; implicit_midpoint works for all families.
PhasePoint step(const HamiltonianSystem& sys, const PhasePoint& z,
                const IntegratorConfig& cfg);

/// One step together with the exact differential of the numerical one-step
/// map (discrete variational flow).
struct StepWithTangent {
  PhasePoint z;
  Mat dstep;  ///< 2n x 2n, exactly symplectic up to the Newton tolerance
};
StepWithTangent step_with_tangent(const HamiltonianSystem& sys, const PhasePoint& z,
                                  const IntegratorConfig& cfg);

struct Trajectory {
  std::vector<double> times;
  std::vector<PhasePoint> points;
  double max_energy_drift = 0.0;  ///< max |h(z_t) - h(z_0)| along the way
};

/// Integrate for time T (sign of T selects direction); records energy drift.
Trajectory flow(const HamiltonianSystem& sys, const PhasePoint& z, double T,
                const IntegratorConfig& cfg);

/// Endpoint and accumulated tangent map over time t, using ceil(|t|/dt) equal
/// steps.  The workhorse behind the Jacobi-curve sampling.
StepWithTangent flow_to(const HamiltonianSystem& sys, const PhasePoint& z, double t,
                        const IntegratorConfig& cfg);

struct TangentTrajectory {
  std::vector<double> times;
  std::vector<PhasePoint> base_points;
  std::vector<Mat> frames;  ///< pushed-forward frame columns, 2n x m
  double max_energy_drift = 0.0;
};

/// Push frame columns along the flow with the discrete variational flow.
TangentTrajectory tangent_flow(const HamiltonianSystem& sys, const PhasePoint& z,
                               const Mat& frame, double T, const IntegratorConfig& cfg);

/// Fixed orthonormal complement realizing Sigma_z: columns span
/// {v : <grad h, v> = 0, sigma(v, grad h) = 0}, a 2(n-1)-dimensional
/// symplectic subspace transversal to vf(z) inside ker(d_z h).
struct ReducedFrame {
  PhasePoint base;
  Mat columns;    ///< 2n x (2n-2), orthonormal
  Mat omega_bar;  ///< restricted symplectic form, (2n-2) x (2n-2)
  Vec grad;       ///< grad h at base
  Vec vf;         ///< Hamiltonian field at base
  Vec omega_grad; ///< Omega * grad (cached for the sigma pairing)
  double vf_pairing = 0.0;  ///< sigma(vf, grad direction), nonzero off critical points

  /// Project an ambient vector onto the representative complement
  /// (first kills the grad-h component, then the vf component).
  Vec project(const Vec& v) const;
  /// Coordinates of project(v) in the columns basis.
  Vec coords(const Vec& v) const;
  Mat coords(const Mat& vectors) const;
  /// Ambient representative of reduced coordinates.
  Vec ambient(const Vec& xi) const { return columns * xi; }
};

ReducedFrame make_reduced_frame(const HamiltonianSystem& sys, const PhasePoint& z);

/// Spec operation: project ambient vectors to the reduced space.
/// Returns the frame together with the reduced coordinates of the inputs.
struct ReduceResult {
  ReducedFrame frame;
  Mat reduced;  ///< (2n-2) x m coordinates
};
ReduceResult reduce(const HamiltonianSystem& sys, const PhasePoint& z, const Mat& vectors);

}  // namespace hamcurv::flow
