#include "hamcurv/jacobi.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>

namespace hamcurv::jacobi {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

flow::Scheme scheme_for(const HamiltonianSystem& sys) {
  return sys.separable() ? flow::Scheme::stormer_verlet : flow::Scheme::implicit_midpoint;
}

double characteristic_time(const HamiltonianSystem& sys, const PhasePoint& z) {
  const double s = sys.hess_h(z).norm();
  return 1.0 / std::sqrt(std::max(1.0, s));
}

/// Intersection of the distribution with ker(d h) at a point: 2n x (n-1).
Mat lambda_cap_ker(const HamiltonianSystem& sys, const PhasePoint& z,
                   const LagrangianDistribution& lambda) {
  const Mat lam = lambda(z);
  const int n = static_cast<int>(lam.cols());
  Mat row = sys.grad_h(z).transpose() * lam;  // 1 x n
  Mat nb;
  try {
    nb = nullspace_onb(row, n - 1);
  } catch (const DegenerateFrameError&) {
    throw DegenerateFrameError(
        "intersection of the distribution with ker(dh) drops dimension");
  }
  return lam * nb;
}

struct GraphSplitting {
  Mat basis;  // [L | C], k x k Darboux
  int m = 0;  // half-dimension
};

GraphSplitting make_splitting(const Mat& omega, const Mat& lagrangian_frame) {
  symplin::SymplecticSpace space = symplin::SymplecticSpace::general(omega);
  GraphSplitting sp;
  sp.m = static_cast<int>(lagrangian_frame.cols());
  sp.basis = symplin::darboux_complete(space, lagrangian_frame);
  return sp;
}

Mat graph_coordinate(const GraphSplitting& sp, const Mat& frame, double cond_limit,
                     double* asym = nullptr) {
  const Mat coords = sp.basis.partialPivLu().solve(frame);
  const Mat x = coords.topRows(sp.m);
  const Mat y = coords.bottomRows(sp.m);
  Eigen::JacobiSVD<Mat> svd(x);
  const auto& sv = svd.singularValues();
  const double cnd = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                             : std::numeric_limits<double>::infinity();
  if (!(cnd < cond_limit))
    throw TransversalityError(
        "graph coordinate undefined: subspace nearly parallel to the complement "
        "(conditioning " + std::to_string(cnd) + ")",
        1);
  Mat s = x.transpose().partialPivLu().solve(y.transpose()).transpose();
  if (asym) *asym = std::max(*asym, hamcurv::asym_defect(s));
  return symmetrize(s);
}

using CurveSampler = std::function<JacobiCurveData(double h, double center)>;

std::vector<double> stencil_offsets(double h) {
  return {0.0, h, -h, 2 * h, -2 * h, 3 * h, -3 * h};
}

/// Both curve samplers funnel through this: `frame_at` yields the subspace
/// frame of J(t) in the working coordinates.
JacobiCurveData sample_curve_generic(const std::function<Mat(double)>& frame_at,
                                     const Mat& omega, double h, double center,
                                     bool reduced, const CurvatureConfig& cfg) {
  JacobiCurveData data;
  data.center = center;
  data.h = h;
  data.reduced = reduced;
  data.complement_shift = kNaN;
  const Mat l0 = orthonormalize(frame_at(center));
  const GraphSplitting sp = make_splitting(omega, l0);
  for (double off : stencil_offsets(h)) {
    data.offsets.push_back(off);
    data.S.push_back(graph_coordinate(sp, frame_at(center + off), cfg.cond_limit));
  }
  return data;
}

Mat shift_complement(const Mat& s, double w) {
  if (w == 0.0) return s;
  const int m = static_cast<int>(s.rows());
  return (Mat::Identity(m, m) - w * s).partialPivLu().solve(s);
}

/// Laurent t^0 coefficient of T(tau) = (S(c+tau) - S(c))^{-1} on {±h, ±2h}.
struct LaurentFit {
  Mat t0, t2, tm1, t1;
};

LaurentFit laurent_fit(const Mat& sc, const std::function<const Mat&(double)>& s_at,
                       double h, double cond_limit) {
  auto tmat = [&](double tau) -> Mat {
    const Mat d = s_at(tau) - sc;
    Eigen::JacobiSVD<Mat> svd(d);
    const auto& sv = svd.singularValues();
    if (!(sv(sv.size() - 1) > sv(0) / cond_limit))
      throw RegularityError("Jacobi curve not regular at this scale: S(t)-S(c) "
                            "numerically singular at tau = " + std::to_string(tau));
    return d.inverse();
  };
  const Mat th = tmat(h), tmh = tmat(-h), t2h = tmat(2 * h), tm2h = tmat(-2 * h);
  LaurentFit f;
  const Mat e1 = 0.5 * (th + tmh), e2 = 0.5 * (t2h + tm2h);
  const Mat o1 = 0.5 * (th - tmh), o2 = 0.5 * (t2h - tm2h);
  f.t0 = (4.0 * e1 - e2) / 3.0;
  f.t2 = (e2 - e1) / (3.0 * h * h);
  f.t1 = (2.0 * o2 - o1) / (3.0 * h);
  f.tm1 = h * (4.0 * o1 - 2.0 * o2) / 3.0;
  return f;
}

double projector_free_term_defect(const Mat& sc, const Mat& t0) {
  const int m = static_cast<int>(sc.rows());
  Mat pi0(2 * m, 2 * m);
  const Mat a = Mat::Identity(m, m) + t0 * sc;
  pi0.topLeftCorner(m, m) = a;
  pi0.topRightCorner(m, m) = -t0;
  pi0.bottomLeftCorner(m, m) = sc * a;
  pi0.bottomRightCorner(m, m) = -sc * t0;
  return (pi0 * pi0 - pi0).norm() / std::max(1.0, pi0.squaredNorm());
}

/// S° at one center from the fitted free term; nullopt when the derivative
/// element is not a graph over the splitting (T0 singular).
std::optional<Mat> derivative_coordinate(const Mat& sc, const Mat& t0, double sv_floor) {
  Eigen::JacobiSVD<Mat> svd(t0, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(sv.size() - 1) > sv_floor * std::max(1.0, sv(0)))) return std::nullopt;
  return sc + t0.inverse();
}

}  // namespace

const Mat& JacobiCurveData::S_at(double offset) const {
  for (size_t i = 0; i < offsets.size(); ++i)
    if (std::abs(offsets[i] - offset) <= 1e-9 * std::max(1.0, std::abs(h)))
      return S[i];
  throw NumericalError("stencil offset not sampled");
}

LagrangianDistribution vertical_distribution(int n) {
  Mat frame = Mat::Zero(2 * n, n);
  frame.topRows(n) = Mat::Identity(n, n);
  return [frame](const PhasePoint&) { return frame; };
}

Mat jacobi_coord(const HamiltonianSystem& sys, const PhasePoint& z,
                 const LagrangianDistribution& lambda, double t,
                 const CurvatureConfig& cfg) {
  const double tc = characteristic_time(sys, z);
  flow::IntegratorConfig icfg;
  icfg.scheme = scheme_for(sys);
  icfg.dt = std::max(std::abs(t), 1e-3 * tc) / cfg.substeps;
  const Mat l0 = orthonormalize(lambda(z));
  const int n = sys.n;
  Mat omega = Mat::Zero(2 * n, 2 * n);
  omega.topRightCorner(n, n) = Mat::Identity(n, n);
  omega.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
  const GraphSplitting sp = make_splitting(omega, l0);
  const auto fw = flow::flow_to(sys, z, t, icfg);
  const Mat pulled = fw.dstep.partialPivLu().solve(lambda(fw.z));
  return graph_coordinate(sp, pulled, cfg.cond_limit);
}

JacobiCurveData sample_jacobi_curve(const HamiltonianSystem& sys, const PhasePoint& z,
                                    const LagrangianDistribution& lambda, double h,
                                    double center, const CurvatureConfig& cfg) {
  const int n = sys.n;
  Mat omega = Mat::Zero(2 * n, 2 * n);
  omega.topRightCorner(n, n) = Mat::Identity(n, n);
  omega.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
  flow::IntegratorConfig icfg;
  icfg.scheme = scheme_for(sys);
  icfg.dt = h / cfg.substeps;
  auto frame_at = [&sys, &lambda, icfg, z](double t) -> Mat {
    const auto fw = flow::flow_to(sys, z, t, icfg);
    return fw.dstep.partialPivLu().solve(lambda(fw.z));
  };
  return sample_curve_generic(frame_at, omega, h, center, false, cfg);
}

JacobiCurveData sample_reduced_curve(const HamiltonianSystem& sys, const PhasePoint& z,
                                     double h, double center, const CurvatureConfig& cfg) {
  const flow::ReducedFrame rf = flow::make_reduced_frame(sys, z);
  const LagrangianDistribution lambda = vertical_distribution(sys.n);
  flow::IntegratorConfig icfg;
  icfg.scheme = scheme_for(sys);
  icfg.dt = h / cfg.substeps;
  auto frame_at = [&sys, rf, lambda, icfg, z](double t) -> Mat {
    const auto fw = flow::flow_to(sys, z, t, icfg);
    const Mat cap = lambda_cap_ker(sys, fw.z, lambda);
    const Mat pulled = fw.dstep.partialPivLu().solve(cap);
    return rf.coords(pulled);
  };
  return sample_curve_generic(frame_at, rf.omega_bar, h, center, true, cfg);
}

void derivative_curve(JacobiCurveData& data, const CurvatureConfig& cfg) {
  const double h = data.h;
  if (data.S.size() != 7) throw NumericalError("derivative_curve expects a 7-point stencil");

  // Candidate complement shifts; keep the first choice across Richardson
  // levels so the truncation error stays a clean h^2 series.
  std::vector<double> candidates;
  if (std::isnan(data.complement_shift)) {
    const Mat sdot_est = (data.S_at(h) - data.S_at(-h)) / (2.0 * h);
    const double scale = std::max(1.0, sdot_est.norm());
    for (double c : {0.0, 1.0, -1.0, 0.5, -0.5, 2.0, -2.0}) candidates.push_back(c / scale);
  } else {
    candidates.push_back(data.complement_shift);
  }

  std::string last_err = "no complement candidate";
  for (double w : candidates) {
    try {
      std::vector<Mat> ss(data.S.size());
      for (size_t i = 0; i < data.S.size(); ++i) ss[i] = shift_complement(data.S[i], w);
      auto s_at = [&](double off) -> const Mat& {
        size_t best = 0;
        double dist = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < data.offsets.size(); ++i) {
          const double d = std::abs(data.offsets[i] - off);
          if (d < dist) {
            dist = d;
            best = i;
          }
        }
        if (dist > 1e-6 * std::max(1.0, std::abs(h)))
          throw NumericalError("stencil offset not sampled");
        return ss[best];
      };

      const Mat sc = s_at(0.0);
      auto center_at = [&](double c) {
        return std::function<const Mat&(double)>(
            [&s_at, c](double tau) -> const Mat& { return s_at(c + tau); });
      };
      const LaurentFit fit = laurent_fit(sc, center_at(0.0), h, cfg.cond_limit);

      // Cross-validate the fit at ±3h (the unused stencil points).
      double resid = 0.0;
      for (double sgn : {1.0, -1.0}) {
        const double t3 = sgn * 3.0 * h;
        const Mat pred = fit.tm1 / t3 + fit.t0 + t3 * fit.t1 + t3 * t3 * fit.t2;
        const Mat actual = (s_at(t3) - sc).inverse();
        resid = std::max(resid, (pred - actual).norm() / std::max(1.0, actual.norm()));
      }

      double pdef = projector_free_term_defect(sc, fit.t0);
      const auto scirc = derivative_coordinate(sc, fit.t0, 1e-10);
      if (!scirc) {
        last_err = "free Laurent term singular (derivative element parallel to the complement)";
        continue;
      }

      // Derivative element at the shifted centers ±h, then a central difference.
      Mat scirc_side[2];
      bool side_ok = true;
      for (int sidx = 0; sidx < 2; ++sidx) {
        const double c = sidx == 0 ? h : -h;
        const LaurentFit f2 = laurent_fit(s_at(c), center_at(c), h, cfg.cond_limit);
        pdef = std::max(pdef, projector_free_term_defect(s_at(c), f2.t0));
        const auto sc2 = derivative_coordinate(s_at(c), f2.t0, 1e-10);
        if (!sc2) {
          side_ok = false;
          break;
        }
        scirc_side[sidx] = *sc2;
      }
      if (!side_ok) {
        last_err = "derivative element left the graph chart at a shifted center";
        continue;
      }

      if (resid > cfg.fit_tol)
        throw RegularityError(
            "Laurent fit residual " + std::to_string(resid) +
            " above tolerance: curve not regular at this scale");

      data.S_center = sc;
      data.S_deriv = (8.0 * (s_at(h) - s_at(-h)) - (s_at(2 * h) - s_at(-2 * h))) / (12.0 * h);
      data.S_circ = *scirc;
      data.S_circ_deriv = (scirc_side[0] - scirc_side[1]) / (2.0 * h);
      data.complement_shift = w;
      data.fit_residual = resid;
      data.projector_defect = pdef;
      return;
    } catch (const RegularityError& e) {
      last_err = e.what();
    }
  }
  throw RegularityError("derivative_curve failed: " + last_err);
}

CurvatureOperator curvature(const Mat& s, const Mat& s_deriv, const Mat& s_circ,
                            const Mat& s_circ_deriv) {
  const Mat d = s_circ - s;
  Eigen::JacobiSVD<Mat> svd(d);
  const auto& sv = svd.singularValues();
  if (!(sv(sv.size() - 1) > 1e-14 * std::max(1.0, sv(0))))
    throw RegularityError("curvature formula: S° - S singular");
  const Mat di = d.inverse();
  CurvatureOperator out;
  out.matrix = di * s_circ_deriv * di * s_deriv;
  out.symmetrized = symmetrize(out.matrix);
  out.asym_defect = hamcurv::asym_defect(out.matrix);
  Eigen::SelfAdjointEigenSolver<Mat> es(out.symmetrized);
  out.eigvals = es.eigenvalues();
  return out;
}

namespace {

CurvatureOperator richardson_curvature(const CurveSampler& sampler, double t_char,
                                       double center, CurvatureOperator::Kind kind,
                                       const CurvatureConfig& cfg) {
  double h = cfg.stencil_h * t_char;
  const double floor_h = cfg.h_floor_factor * t_char;
  std::optional<Mat> raw_prev, ext_prev;
  double shift = kNaN;
  double defect = std::numeric_limits<double>::infinity();
  double h_used = h;
  std::optional<CurvatureOperator> last;

  for (int lev = 0; lev < cfg.max_levels; ++lev) {
    JacobiCurveData data = sampler(h, center);
    data.complement_shift = shift;
    derivative_curve(data, cfg);
    shift = data.complement_shift;
    CurvatureOperator cur =
        curvature(data.S_center, data.S_deriv, data.S_circ, data.S_circ_deriv);
    cur.kind = kind;
    if (raw_prev) {
      const Mat ext = (4.0 * cur.matrix - *raw_prev) / 3.0;
      if (ext_prev)
        defect = (ext - *ext_prev).norm() / std::max(1.0, ext.norm());
      ext_prev = ext;
      CurvatureOperator acc;
      acc.kind = kind;
      acc.matrix = ext;
      acc.symmetrized = symmetrize(ext);
      acc.asym_defect = hamcurv::asym_defect(ext);
      Eigen::SelfAdjointEigenSolver<Mat> es(acc.symmetrized);
      acc.eigvals = es.eigenvalues();
      acc.richardson_defect = defect;
      acc.stencil_h = h;
      last = std::move(acc);
      if (defect <= cfg.richardson_tol) return *last;
    }
    raw_prev = cur.matrix;
    h_used = h;
    if (0.5 * h < floor_h) break;
    h *= 0.5;
  }
  if (last) return *last;
  throw NumericalError("curvature stencil could not be refined (floor too high?)");
}

void monotonicity_gate(const HamiltonianSystem& sys, const PhasePoint& z,
                       const CurvatureConfig& cfg) {
  const Mat cap = lambda_cap_ker(sys, z, vertical_distribution(sys.n));
  const int n = sys.n;
  Mat omega = Mat::Zero(2 * n, 2 * n);
  omega.topRightCorner(n, n) = Mat::Identity(n, n);
  omega.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
  const auto space = symplin::SymplecticSpace::general(omega);
  const auto gram = symplin::gram_gh(space, sys.hess_h(z), cap, cfg.gate_tol);
  if (!gram.sign_definite())
    throw RegularityError(
        "monotonicity gate: g^h not sign-definite on the reduced distribution "
        "(signature " + std::to_string(gram.n_plus) + "," +
        std::to_string(gram.n_minus) + "," + std::to_string(gram.n_zero) + ")");
}

}  // namespace

CurvatureOperator full_curvature(const HamiltonianSystem& sys, const PhasePoint& z,
                                 const LagrangianDistribution& lambda,
                                 const CurvatureConfig& cfg) {
  const double tc = characteristic_time(sys, z);
  CurveSampler sampler = [&](double h, double center) {
    return sample_jacobi_curve(sys, z, lambda, h, center, cfg);
  };
  return richardson_curvature(sampler, tc, 0.0, CurvatureOperator::Kind::full, cfg);
}

CurvatureOperator reduced_curvature(const HamiltonianSystem& sys, const PhasePoint& z,
                                    const CurvatureConfig& cfg) {
  return reduced_curvature_at_time(sys, z, 0.0, cfg);
}

CurvatureOperator reduced_curvature_at_time(const HamiltonianSystem& sys,
                                            const PhasePoint& z, double t_center,
                                            const CurvatureConfig& cfg) {
  if (systems::is_critical_point(sys, z))
    throw CriticalPointError("reduced curvature undefined at a critical point");
  monotonicity_gate(sys, z, cfg);
  const double tc = characteristic_time(sys, z);
  CurveSampler sampler = [&](double h, double center) {
    return sample_reduced_curve(sys, z, h, center, cfg);
  };
  return richardson_curvature(sampler, tc, t_center, CurvatureOperator::Kind::reduced, cfg);
}

std::pair<Mat, Mat> mechanical_closed_form(const HamiltonianSystem& sys,
                                           const PhasePoint& z) {
  if (sys.family != systems::FamilyTag::mechanical || !sys.potential)
    throw ConfigError("mechanical_closed_form needs a mechanical system");
  const double p2 = z.p.squaredNorm();
  if (p2 <= 0.0) throw NumericalError("mechanical closed form singular at p = 0");
  const Mat r = sys.potential->hessian(z.q);
  const Vec gu = sys.potential->gradient(z.q);
  const Mat rhat = r + (3.0 / p2) * gu * gu.transpose();
  return {r, rhat};
}

double gauss_curvature(const Metric2D& metric, const Vec& q) {
  const Mat g = metric.g(q);
  const double E = g(0, 0), F = g(0, 1), G = g(1, 1);
  const Mat gu = metric.dg(q, 0), gv = metric.dg(q, 1);
  const double Eu = gu(0, 0), Ev = gv(0, 0);
  const double Fu = gu(0, 1), Fv = gv(0, 1);
  const double Gu = gu(1, 1), Gv = gv(1, 1);
  const double Evv = metric.d2g(q, 1, 1)(0, 0);
  const double Fuv = metric.d2g(q, 0, 1)(0, 1);
  const double Guu = metric.d2g(q, 0, 0)(1, 1);
  Eigen::Matrix3d a, b;
  a << -0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev,
       Fv - 0.5 * Gu, E, F,
       0.5 * Gv, F, G;
  b << 0.0, 0.5 * Ev, 0.5 * Gu,
       0.5 * Ev, E, F,
       0.5 * Gu, F, G;
  const double det_g = E * G - F * F;
  if (!(det_g > 0.0)) throw NumericalError("gauss_curvature: metric not positive definite");
  return (a.determinant() - b.determinant()) / (det_g * det_g);
}

CurvatureOperator geodesic_closed_form(const Metric2D& metric, const PhasePoint& z) {
  const Mat ginv = metric.g(z.q).inverse();
  const double speed2 = z.p.dot(ginv * z.p);  // |zbar|^2_g = 2E
  CurvatureOperator out;
  out.kind = CurvatureOperator::Kind::reduced;
  out.matrix = Mat::Constant(1, 1, gauss_curvature(metric, z.q) * speed2);
  out.symmetrized = out.matrix;
  out.asym_defect = 0.0;
  out.eigvals = Vec::Constant(1, out.matrix(0, 0));
  return out;
}

CurvatureOperator mechanical_on_metric_closed_form(const Metric2D& metric,
                                                   const Potential& U,
                                                   const PhasePoint& z) {
  const Mat g = metric.g(z.q);
  const Mat ginv = g.inverse();
  const double h_val = 0.5 * z.p.dot(ginv * z.p) + U.value(z.q);
  const double two_h_minus_u = 2.0 * (h_val - U.value(z.q));
  if (!(two_h_minus_u > 1e-14))
    throw NumericalError("closed form singular at a turning point (h = U)");

  // velocity and the g-unit transverse direction
  const Vec vel = ginv * z.p;
  const double vel2 = vel.dot(g * vel);
  Vec w = Vec::Unit(2, std::abs(vel[0]) > std::abs(vel[1]) ? 1 : 0);
  w -= (w.dot(g * vel) / vel2) * vel;
  w /= std::sqrt(w.dot(g * w));

  // Riemannian gradient of U and its covariant derivative along w
  const Vec du = U.gradient(z.q);
  const Vec gradU = ginv * du;
  const Mat hu = U.hessian(z.q);
  Mat dgradU(2, 2);  // column j = d_j (grad U)
  for (int j = 0; j < 2; ++j)
    dgradU.col(j) = -ginv * metric.dg(z.q, j) * ginv * du + ginv * hu.col(j);
  // Christoffel symbols Gamma^i_{jk}
  double gamma[2][2][2];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) {
        double s = 0.0;
        for (int l = 0; l < 2; ++l)
          s += ginv(i, l) * (metric.dg(z.q, j)(l, k) + metric.dg(z.q, k)(l, j) -
                             metric.dg(z.q, l)(j, k));
        gamma[i][j][k] = 0.5 * s;
      }
  Vec cov = Vec::Zero(2);  // D_w (grad U)
  for (int i = 0; i < 2; ++i) {
    double s = 0.0;
    for (int j = 0; j < 2; ++j) {
      s += w[j] * dgradU(i, j);
      for (int k = 0; k < 2; ++k) s += w[j] * gamma[i][j][k] * gradU[k];
    }
    cov[i] = s;
  }

  const double curv_term = gauss_curvature(metric, z.q) * vel2;
  const double hess_term = w.dot(g * cov);
  const double gw = gradU.dot(g * w);
  const double corr_term = 3.0 * gw * gw / two_h_minus_u;

  CurvatureOperator out;
  out.kind = CurvatureOperator::Kind::reduced;
  out.matrix = Mat::Constant(1, 1, curv_term + hess_term + corr_term);
  out.symmetrized = out.matrix;
  out.asym_defect = 0.0;
  out.eigvals = Vec::Constant(1, out.matrix(0, 0));
  return out;
}

Mat compress_to_reduced_fiber(const Mat& fiber_op, const Vec& p) {
  const int n = static_cast<int>(p.size());
  const Mat xi = nullspace_onb(p.transpose(), n - 1);
  return xi.transpose() * fiber_op * xi;
}

MovingFrame canonical_moving_frame(const HamiltonianSystem& sys, const PhasePoint& z,
                                   double t_max, int grid_points,
                                   const CurvatureConfig& cfg) {
  if (grid_points < 3) throw ConfigError("moving frame needs at least 3 grid points");
  monotonicity_gate(sys, z, cfg);
  const double tc = characteristic_time(sys, z);
  const double h = cfg.stencil_h * tc;

  struct Node {
    Mat coeff;  // (S° - S)^{-1} S'
    Mat r;
    Mat s_center;
  };
  std::map<long, Node> cache;
  auto eval = [&](double t) -> const Node& {
    const long key = std::lround(t * 1e9);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    JacobiCurveData d = sample_reduced_curve(sys, z, h, t, cfg);
    derivative_curve(d, cfg);
    Node node;
    const Mat diff = d.S_circ - d.S_center;
    node.coeff = diff.partialPivLu().solve(d.S_deriv);
    node.r = curvature(d.S_center, d.S_deriv, d.S_circ, d.S_circ_deriv).matrix;
    node.s_center = d.S_center;
    return cache.emplace(key, std::move(node)).first->second;
  };

  // Graph splitting fixed at t = 0 (same construction as the sampler).
  const flow::ReducedFrame rf = flow::make_reduced_frame(sys, z);
  const Mat cap0 = lambda_cap_ker(sys, z, vertical_distribution(sys.n));
  const Mat l0 = orthonormalize(rf.coords(cap0));
  const GraphSplitting sp = make_splitting(rf.omega_bar, l0);
  const int m = sp.m;

  // Initial frame normalized so that sigma(e_i, e'_j) = -delta_ij:
  // X0 = (-S'(0))^{-1/2} when the monotone form is negative (else identity).
  JacobiCurveData d0 = sample_reduced_curve(sys, z, h, 0.0, cfg);
  derivative_curve(d0, cfg);
  Mat x = Mat::Identity(m, m);
  {
    Eigen::SelfAdjointEigenSolver<Mat> es(Mat(-symmetrize(d0.S_deriv)));
    if (es.eigenvalues().minCoeff() > 0.0)
      x = es.operatorInverseSqrt();
  }

  MovingFrame mf;
  const double dt = t_max / (grid_points - 1);
  for (int i = 0; i < grid_points; ++i) {
    const double t = i * dt;
    const Node& node = eval(t);
    Mat e(2 * m, m);
    e.topRows(m) = x;
    e.bottomRows(m) = node.s_center * x;
    mf.times.push_back(t);
    mf.e.push_back(sp.basis * e);  // back to Sigma coordinates
    mf.R.push_back(node.r);
    if (i + 1 < grid_points) {
      // RK4 on X' = coeff(t) X
      const Mat k1 = node.coeff * x;
      const Mat c2 = eval(t + 0.5 * dt).coeff;
      const Mat k2 = c2 * (x + 0.5 * dt * k1);
      const Mat k3 = c2 * (x + 0.5 * dt * k2);
      const Mat k4 = eval(t + dt).coeff * (x + dt * k3);
      x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }
  return mf;
}

}  // namespace hamcurv::jacobi
