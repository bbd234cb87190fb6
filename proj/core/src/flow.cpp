#include "hamcurv/flow.hpp"

#include <cmath>
#include <string>

namespace hamcurv::flow {

namespace {

Vec vf_ambient(const HamiltonianSystem& sys, const Vec& z) {
  return systems::hamiltonian_vf(sys, PhasePoint::from_ambient(z));
}

Mat dvf_ambient(const HamiltonianSystem& sys, const Vec& z) {
  const int n = sys.n;
  const Mat h = sys.hess_h(PhasePoint::from_ambient(z));
  Mat dvf(2 * n, 2 * n);
  dvf.topRows(n) = -h.bottomRows(n);
  dvf.bottomRows(n) = h.topRows(n);
  return dvf;
}

void check_not_critical(const HamiltonianSystem& sys, const PhasePoint& z) {
  if (systems::is_critical_point(sys, z))
    throw CriticalPointError("integration started at a critical point of h");
}

StepWithTangent verlet_step(const HamiltonianSystem& sys, const PhasePoint& z,
                            const IntegratorConfig& cfg, bool want_tangent) {
  if (!sys.separable())
    throw ConfigError("stormer_verlet requires a separable (mechanical) Hamiltonian");
  const auto& pot = *sys.potential;
  const int n = sys.n;
  const double dt = cfg.dt;

  const Vec g0 = pot.gradient(z.q);
  const Vec p_half = z.p - 0.5 * dt * g0;
  Vec q1 = z.q + dt * p_half;
  const Vec g1 = pot.gradient(q1);
  const Vec p1 = p_half - 0.5 * dt * g1;

  StepWithTangent out;
  if (want_tangent) {
    // Exact differential of the three-substep composition, in (p, q) blocks.
    const Mat h0 = pot.hessian(z.q);
    const Mat h1 = pot.hessian(q1);
    Mat m = Mat::Identity(2 * n, 2 * n);
    Mat kick0 = Mat::Identity(2 * n, 2 * n);
    kick0.topRightCorner(n, n) = -0.5 * dt * h0;
    Mat drift = Mat::Identity(2 * n, 2 * n);
    drift.bottomLeftCorner(n, n) = dt * Mat::Identity(n, n);
    Mat kick1 = Mat::Identity(2 * n, 2 * n);
    kick1.topRightCorner(n, n) = -0.5 * dt * h1;
    m = kick1 * drift * kick0;
    out.dstep = std::move(m);
  }
  sys.topology.wrap(q1);
  out.z = PhasePoint{p1, q1};
  return out;
}

StepWithTangent midpoint_step(const HamiltonianSystem& sys, const PhasePoint& z,
                              const IntegratorConfig& cfg, bool want_tangent) {
  const int d = 2 * sys.n;
  const double dt = cfg.dt;
  const Vec z0 = z.ambient();

  Vec z1 = z0 + dt * vf_ambient(sys, z0);  // explicit predictor
  bool converged = false;
  Vec mid(d);
  for (int it = 0; it < cfg.newton_max_iter; ++it) {
    mid = 0.5 * (z0 + z1);
    const Vec res = z1 - z0 - dt * vf_ambient(sys, mid);
    if (res.norm() <= cfg.newton_tol * std::max(1.0, z1.norm())) {
      converged = true;
      break;
    }
    const Mat jac = Mat::Identity(d, d) - 0.5 * dt * dvf_ambient(sys, mid);
    z1 -= jac.partialPivLu().solve(res);
  }
  if (!converged)
    throw NumericalError("implicit midpoint: Newton did not converge (dt = " +
                         std::to_string(dt) + ")");

  StepWithTangent out;
  if (want_tangent) {
    // dstep is the Cayley transform of (dt/2) Dvf(mid): exactly symplectic.
    const Mat a = dvf_ambient(sys, 0.5 * (z0 + z1));
    const Mat left = Mat::Identity(d, d) - 0.5 * dt * a;
    const Mat right = Mat::Identity(d, d) + 0.5 * dt * a;
    out.dstep = left.partialPivLu().solve(right);
  }
  PhasePoint znew = PhasePoint::from_ambient(z1);
  sys.topology.wrap(znew.q);
  out.z = std::move(znew);
  return out;
}

StepWithTangent do_step(const HamiltonianSystem& sys, const PhasePoint& z,
                        const IntegratorConfig& cfg, bool want_tangent) {
  if (!(cfg.dt != 0.0) || !std::isfinite(cfg.dt))
    throw ConfigError("integrator dt must be nonzero and finite");
  check_not_critical(sys, z);
  return cfg.scheme == Scheme::stormer_verlet ? verlet_step(sys, z, cfg, want_tangent)
                                              : midpoint_step(sys, z, cfg, want_tangent);
}

}  // namespace

PhasePoint step(const HamiltonianSystem& sys, const PhasePoint& z,
                const IntegratorConfig& cfg) {
  return do_step(sys, z, cfg, false).z;
}

StepWithTangent step_with_tangent(const HamiltonianSystem& sys, const PhasePoint& z,
                                  const IntegratorConfig& cfg) {
  return do_step(sys, z, cfg, true);
}

Trajectory flow(const HamiltonianSystem& sys, const PhasePoint& z, double T,
                const IntegratorConfig& cfg) {
  Trajectory traj;
  traj.times.push_back(0.0);
  traj.points.push_back(z);
  if (T == 0.0) return traj;
  const double h0 = sys.eval_h(z);
  const long steps = static_cast<long>(std::ceil(std::abs(T) / cfg.dt - 1e-12));
  IntegratorConfig local = cfg;
  local.dt = T / static_cast<double>(steps);
  PhasePoint cur = z;
  for (long k = 1; k <= steps; ++k) {
    cur = step(sys, cur, local);
    traj.times.push_back(local.dt * static_cast<double>(k));
    traj.points.push_back(cur);
    traj.max_energy_drift = std::max(traj.max_energy_drift, std::abs(sys.eval_h(cur) - h0));
  }
  return traj;
}

StepWithTangent flow_to(const HamiltonianSystem& sys, const PhasePoint& z, double t,
                        const IntegratorConfig& cfg) {
  StepWithTangent acc;
  acc.z = z;
  acc.dstep = Mat::Identity(2 * sys.n, 2 * sys.n);
  if (t == 0.0) return acc;
  const long steps = std::max<long>(1, static_cast<long>(std::ceil(std::abs(t) / cfg.dt - 1e-12)));
  IntegratorConfig local = cfg;
  local.dt = t / static_cast<double>(steps);
  for (long k = 0; k < steps; ++k) {
    StepWithTangent s = step_with_tangent(sys, acc.z, local);
    acc.z = s.z;
    acc.dstep = s.dstep * acc.dstep;
  }
  return acc;
}

TangentTrajectory tangent_flow(const HamiltonianSystem& sys, const PhasePoint& z,
                               const Mat& frame, double T, const IntegratorConfig& cfg) {
  if (frame.rows() != 2 * sys.n) throw DegenerateFrameError("tangent frame dimension mismatch");
  TangentTrajectory traj;
  traj.times.push_back(0.0);
  traj.base_points.push_back(z);
  traj.frames.push_back(frame);
  if (T == 0.0) return traj;
  const double h0 = sys.eval_h(z);
  const long steps = static_cast<long>(std::ceil(std::abs(T) / cfg.dt - 1e-12));
  IntegratorConfig local = cfg;
  local.dt = T / static_cast<double>(steps);
  PhasePoint cur = z;
  Mat f = frame;
  for (long k = 1; k <= steps; ++k) {
    StepWithTangent s = step_with_tangent(sys, cur, local);
    cur = s.z;
    f = s.dstep * f;
    if (!f.allFinite()) throw NumericalError("tangent frame overflow during integration");
    traj.times.push_back(local.dt * static_cast<double>(k));
    traj.base_points.push_back(cur);
    traj.frames.push_back(f);
    traj.max_energy_drift = std::max(traj.max_energy_drift, std::abs(sys.eval_h(cur) - h0));
  }
  return traj;
}

Vec ReducedFrame::project(const Vec& v) const {
  Vec w = v - (grad.dot(v) / grad.squaredNorm()) * grad;
  w -= (w.dot(omega_grad) / vf_pairing) * vf;
  return w;
}

Vec ReducedFrame::coords(const Vec& v) const { return columns.transpose() * project(v); }

Mat ReducedFrame::coords(const Mat& vectors) const {
  Mat out(columns.cols(), vectors.cols());
  for (int j = 0; j < vectors.cols(); ++j) out.col(j) = coords(Vec(vectors.col(j)));
  return out;
}

ReducedFrame make_reduced_frame(const HamiltonianSystem& sys, const PhasePoint& z) {
  if (systems::is_critical_point(sys, z))
    throw CriticalPointError("reduction undefined at a critical point");
  const int n = sys.n;
  ReducedFrame rf;
  rf.base = z;
  rf.grad = sys.grad_h(z);
  rf.vf = systems::hamiltonian_vf(sys, z);
  Mat omega = Mat::Zero(2 * n, 2 * n);
  omega.topRightCorner(n, n) = Mat::Identity(n, n);
  omega.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
  rf.omega_grad = omega * rf.grad;
  rf.vf_pairing = rf.vf.dot(rf.omega_grad);
  Mat rows(2, 2 * n);
  rows.row(0) = rf.grad.transpose();
  rows.row(1) = rf.omega_grad.normalized().transpose();
  rf.columns = nullspace_onb(rows, 2 * n - 2);
  rf.omega_bar = rf.columns.transpose() * omega * rf.columns;
  return rf;
}

ReduceResult reduce(const HamiltonianSystem& sys, const PhasePoint& z, const Mat& vectors) {
  ReduceResult res{make_reduced_frame(sys, z), Mat()};
  res.reduced = res.frame.coords(vectors);
  return res;
}

}  // namespace hamcurv::flow
