#include "hamcurv/entropy.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hamcurv/exec.hpp"

namespace hamcurv::entropy {

namespace {

Estimate make_estimate(const std::vector<double>& xs) {
  Estimate e;
  e.n_samples = static_cast<int>(xs.size());
  if (xs.empty()) return e;
  e.value = pairwise_sum(xs.data(), e.n_samples) / e.n_samples;
  if (e.n_samples > 1) {
    std::vector<double> dev2(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) dev2[i] = (xs[i] - e.value) * (xs[i] - e.value);
    const double var = pairwise_sum(dev2.data(), e.n_samples) / (e.n_samples - 1);
    e.std_error = std::sqrt(var / e.n_samples);
  }
  return e;
}

}  // namespace

LyapunovSpectrum lyapunov_spectrum(const HamiltonianSystem& sys, const PhasePoint& z,
                                   double T, double renorm_interval,
                                   const flow::IntegratorConfig& icfg,
                                   double overflow_guard) {
  if (!(T > 0.0) || !(renorm_interval > 0.0))
    throw ConfigError("lyapunov_spectrum: T and renorm_interval must be positive");
  if (T < renorm_interval)
    throw ConfigError("lyapunov_spectrum: horizon below the renormalization interval");
  if (systems::is_critical_point(sys, z))
    throw CriticalPointError("lyapunov_spectrum at a critical point");

  flow::ReducedFrame rf = flow::make_reduced_frame(sys, z);
  const int k = static_cast<int>(rf.columns.cols());
  Mat frame = rf.columns;
  Vec logs = Vec::Zero(k);

  const long n_steps = std::max<long>(1, std::lround(T / icfg.dt));
  const long renorm_every = std::max<long>(1, std::lround(renorm_interval / icfg.dt));
  const long checkpoint_every = std::max<long>(renorm_every, n_steps / 16);

  LyapunovSpectrum out;
  out.renorm_interval = renorm_interval;

  PhasePoint cur = z;
  auto renormalize = [&](long step_idx) {
    rf = flow::make_reduced_frame(sys, cur);
    const Mat xi = rf.coords(frame);
    Eigen::HouseholderQR<Mat> qr(xi);
    const Mat q = qr.householderQ() * Mat::Identity(k, k);
    const Mat r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    for (int j = 0; j < k; ++j) {
      const double d = std::abs(r(j, j));
      if (!(d > 0.0)) throw NumericalError("lyapunov_spectrum: frame collapsed in QR");
      logs[j] += std::log(d);
    }
    frame = rf.columns * q;
    if (step_idx > 0 && step_idx % checkpoint_every == 0) {
      const double t = step_idx * icfg.dt;
      std::vector<double> est(k);
      for (int j = 0; j < k; ++j) est[j] = logs[j] / t;
      std::sort(est.begin(), est.end(), std::greater<>());
      out.convergence_history.emplace_back(t, std::move(est));
    }
  };

  for (long i = 1; i <= n_steps; ++i) {
    const auto s = flow::step_with_tangent(sys, cur, icfg);
    cur = s.z;
    frame = s.dstep * frame;
    if (!frame.allFinite())
      throw NumericalError("lyapunov_spectrum: tangent overflow before renormalization");
    if (i % renorm_every == 0 || i == n_steps || frame.norm() > overflow_guard)
      renormalize(i);
  }

  const double t_total = n_steps * icfg.dt;
  out.T = t_total;
  out.exponents.resize(k);
  for (int j = 0; j < k; ++j) out.exponents[j] = logs[j] / t_total;
  std::sort(out.exponents.begin(), out.exponents.end(), std::greater<>());
  for (double e : out.exponents) out.chi += std::max(e, 0.0);
  for (int i = 0; i < k / 2; ++i)
    out.pairing_defect = std::max(out.pairing_defect,
                                  std::abs(out.exponents[i] + out.exponents[k - 1 - i]));
  return out;
}

RiccatiState riccati_integrate(const std::function<Mat(double)>& R_of_t, const Mat& V0,
                               double t0, double t1, const RiccatiConfig& cfg) {
  // Dormand-Prince 5(4) on the matrix state.
  static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  auto rhs = [&R_of_t](double t, const Mat& v) -> Mat { return -(v * v) - R_of_t(t); };

  RiccatiState st;
  st.V = symmetrize(V0);
  st.t = t0;
  if (t1 == t0) return st;
  const double dir = t1 > t0 ? 1.0 : -1.0;
  double h = dir * std::min(cfg.h0, std::abs(t1 - t0));

  for (long it = 0; it < cfg.max_steps; ++it) {
    if (dir * (st.t - t1) >= 0.0) break;
    if (dir * (st.t + h - t1) > 0.0) h = t1 - st.t;

    const Mat k1 = rhs(st.t, st.V);
    const Mat k2 = rhs(st.t + c2 * h, st.V + h * (k1 / 5.0));
    const Mat k3 = rhs(st.t + c3 * h, st.V + h * (3.0 / 40 * k1 + 9.0 / 40 * k2));
    const Mat k4 =
        rhs(st.t + c4 * h, st.V + h * (44.0 / 45 * k1 - 56.0 / 15 * k2 + 32.0 / 9 * k3));
    const Mat k5 = rhs(st.t + c5 * h,
                       st.V + h * (19372.0 / 6561 * k1 - 25360.0 / 2187 * k2 +
                                   64448.0 / 6561 * k3 - 212.0 / 729 * k4));
    const Mat k6 = rhs(st.t + h, st.V + h * (9017.0 / 3168 * k1 - 355.0 / 33 * k2 +
                                             46732.0 / 5247 * k3 + 49.0 / 176 * k4 -
                                             5103.0 / 18656 * k5));
    const Mat v5 = st.V + h * (35.0 / 384 * k1 + 500.0 / 1113 * k3 + 125.0 / 192 * k4 -
                               2187.0 / 6784 * k5 + 11.0 / 84 * k6);
    const Mat k7 = rhs(st.t + h, v5);
    const Mat v4 = st.V + h * (5179.0 / 57600 * k1 + 7571.0 / 16695 * k3 +
                               393.0 / 640 * k4 - 92097.0 / 339200 * k5 +
                               187.0 / 2100 * k6 + 1.0 / 40 * k7);
    const double sc = cfg.atol + cfg.rtol * std::max(st.V.norm(), v5.norm());
    const double err = (v5 - v4).norm() / sc;

    if (err <= 1.0 || std::abs(h) <= cfg.hmin) {
      st.t += h;
      st.V = symmetrize(v5);
      if (st.V.norm() > cfg.blowup_threshold || !st.V.allFinite()) {
        st.blowup = true;
        st.blowup_time = st.t;
        return st;
      }
    }
    const double fac = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
    h *= std::clamp(fac, 0.2, 5.0);
    if (std::abs(h) < cfg.hmin) h = dir * cfg.hmin;
  }
  if (dir * (st.t - t1) < 0.0)
    throw NumericalError("riccati_integrate: step budget exhausted");
  return st;
}

RiccatiState unstable_solution_from_callback(const std::function<Mat(double)>& R_of_t,
                                             int dim, const UnstableConfig& cfg) {
  Mat v_prev;
  bool have_prev = false;
  double resid = std::numeric_limits<double>::infinity();
  for (double T = cfg.horizon0; T <= cfg.max_horizon; T *= 2.0) {
    RiccatiState st =
        riccati_integrate(R_of_t, Mat::Zero(dim, dim), -T, 0.0, cfg.riccati);
    if (st.blowup)
      throw NumericalError("unstable_solution: Riccati blowup at t = " +
                           std::to_string(st.blowup_time) +
                           " (curvature not nonpositive along the orbit?)");
    if (have_prev) {
      resid = (st.V - v_prev).norm();
      if (resid <= cfg.conv_tol) {
        st.convergence_residual = resid;
        Eigen::SelfAdjointEigenSolver<Mat> es(st.V);
        const double scale = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
        for (int i = 0; i < dim; ++i)
          if (es.eigenvalues()(i) > 1e-8 * scale)
            ++st.rank;
        st.kernel_dim = dim - st.rank;
        return st;
      }
    }
    v_prev = st.V;
    have_prev = true;
  }
  throw NumericalError("unstable_solution: no convergence within the horizon budget (residual " +
                       std::to_string(resid) + ")");
}

RiccatiState unstable_solution(const HamiltonianSystem& sys, const PhasePoint& z,
                               const UnstableConfig& cfg) {
  const int dim = sys.n - 1;
  if (dim < 1) throw ConfigError("unstable_solution needs n >= 2");

  // Curvature along the backward orbit, evaluated on a uniform grid and
  // linearly interpolated for the Riccati right-hand side.
  struct Grid {
    std::vector<Mat> r;  // r[j] at t = -j * grid_dt
    std::vector<PhasePoint> pts;
  };
  auto grid = std::make_shared<Grid>();
  grid->pts.push_back(z);

  auto eval_node = [&, grid](size_t j) {
    while (grid->pts.size() <= j) {
      const auto traj =
          flow::flow(sys, grid->pts.back(), -cfg.grid_dt, cfg.integrator);
      grid->pts.push_back(traj.points.back());
    }
    while (grid->r.size() <= j) {
      const auto rc = jacobi::reduced_curvature(sys, grid->pts[grid->r.size()],
                                                cfg.curvature);
      const double scale = std::max(rc.eigvals.cwiseAbs().maxCoeff(), 1.0);
      const double top = rc.eigvals.maxCoeff();
      if (top > cfg.curvature.clamp_tol * scale)
        throw HypothesisViolationError(
            "unstable_solution: positive reduced-curvature eigenvalue along the orbit",
            top);
      grid->r.push_back(rc.symmetrized);
    }
  };

  auto R_of_t = [&, grid](double t) -> Mat {
    const double s = -t / cfg.grid_dt;  // s >= 0 along the backward orbit
    const size_t j0 = static_cast<size_t>(std::max(0.0, std::floor(s)));
    const size_t j1 = j0 + 1;
    eval_node(j1);
    const double a = s - static_cast<double>(j0);
    return (1.0 - a) * grid->r[j0] + a * grid->r[j1];
  };

  return unstable_solution_from_callback(R_of_t, dim, cfg);
}

namespace {

struct KernelSplit {
  Mat q_pos;   // eigenvectors with eigenvalue above the threshold
  Vec lam;     // their eigenvalues
  Mat q_ker;   // the rest
};

KernelSplit split_kernel(const Mat& v, double ker_tol) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(v));
  const Vec ev = es.eigenvalues();
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  const double thr = ker_tol * std::max(scale, 1.0);
  if (ev.minCoeff() < -thr)
    throw NumericalError("operator must be nonnegative definite (min eigenvalue " +
                         std::to_string(ev.minCoeff()) + ")");
  std::vector<int> pos, ker;
  for (int i = 0; i < ev.size(); ++i) (ev(i) > thr ? pos : ker).push_back(i);
  KernelSplit ks;
  ks.q_pos.resize(v.rows(), pos.size());
  ks.lam.resize(pos.size());
  ks.q_ker.resize(v.rows(), ker.size());
  for (size_t i = 0; i < pos.size(); ++i) {
    ks.q_pos.col(i) = es.eigenvectors().col(pos[i]);
    ks.lam(i) = ev(pos[i]);
  }
  for (size_t i = 0; i < ker.size(); ++i) ks.q_ker.col(i) = es.eigenvectors().col(ker[i]);
  return ks;
}

void check_r_vanishes_on_kernel(const Mat& r, const Mat& q_ker) {
  if (q_ker.cols() == 0) return;
  if ((r * q_ker).norm() > 1e-6 * std::max(1.0, r.norm()))
    throw NumericalError("inconsistent pair: R does not vanish on ker V");
}

}  // namespace

double r_prime(const Mat& v, const Mat& r, double ker_tol) {
  const KernelSplit ks = split_kernel(v, ker_tol);
  check_r_vanishes_on_kernel(symmetrize(r), ks.q_ker);
  if (ks.lam.size() == 0) return 0.0;
  const Mat r0 = ks.q_pos.transpose() * symmetrize(r) * ks.q_pos;
  double tr = 0.0;
  for (int i = 0; i < ks.lam.size(); ++i) tr += ks.lam(i) - r0(i, i) / ks.lam(i);
  return 0.5 * tr;
}

double r_full(const Mat& v, const Mat& r, double ker_tol) {
  const KernelSplit ks = split_kernel(v, ker_tol);
  check_r_vanishes_on_kernel(symmetrize(r), ks.q_ker);
  if (ks.lam.size() == 0) return 0.0;
  const Mat r0 = ks.q_pos.transpose() * symmetrize(r) * ks.q_pos;
  double tr = 0.0;
  for (int i = 0; i < ks.lam.size(); ++i) {
    const double l = ks.lam(i);
    tr += (l - r0(i, i) * l) / (1.0 + l * l);
  }
  return tr;
}

double trace_sqrt_neg(const jacobi::CurvatureOperator& rhat, double clamp_tol) {
  // Absolute floor in the clamp scale so exact-zero curvature is not flagged
  // by rounding dust.
  const double scale = std::max(rhat.eigvals.cwiseAbs().maxCoeff(), 1.0);
  const double clamp = clamp_tol * scale;
  double tr = 0.0;
  for (int i = 0; i < rhat.eigvals.size(); ++i) {
    const double mu = rhat.eigvals(i);
    if (mu > clamp)
      throw HypothesisViolationError(
          "positive reduced-curvature eigenvalue beyond the clamp tolerance", mu);
    if (mu < -clamp) tr += std::sqrt(-mu);
  }
  return tr;
}

double bound_integrand(const HamiltonianSystem& sys, const PhasePoint& z,
                       const jacobi::CurvatureConfig& cfg) {
  return trace_sqrt_neg(jacobi::reduced_curvature(sys, z, cfg), cfg.clamp_tol);
}

namespace {

Mat psd_sqrt(const Mat& m, double tol) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m));
  const double scale = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  Vec lam = es.eigenvalues();
  for (int i = 0; i < lam.size(); ++i) {
    if (lam(i) < -tol * std::max(scale, 1.0))
      throw NumericalError("matrix square root of a non-PSD operator");
    lam(i) = std::sqrt(std::max(lam(i), 0.0));
  }
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

TraceInequalityResult trace_inequality(const Mat& m, const Mat& n, const Mat& u) {
  const double tol = 1e-10;
  for (const Mat* x : {&m, &n, &u})
    if (hamcurv::asym_defect(*x) > tol * std::max(1.0, x->norm()))
      throw NumericalError("trace_inequality: operands must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> esu(u);
  if (!(esu.eigenvalues().minCoeff() > 0.0))
    throw NumericalError("trace_inequality: U must be positive definite");
  const Mat sqm = psd_sqrt(m, tol);
  const Mat sqn = psd_sqrt(n, tol);
  TraceInequalityResult out;
  out.lhs = (m * u).trace() + (n * u.inverse()).trace();
  out.rhs = 2.0 * (sqm * sqn).trace();
  out.equality_defect = (sqm * u - sqn).norm();
  return out;
}

namespace {

enum class SampleStatus { ok, violation, failed };

struct SampleRow {
  SampleStatus status = SampleStatus::ok;
  double bound = 0.0;
  double chi = 0.0;
  double rprime = 0.0;
  bool symmetric = false;
  bool blowup = false;
  double grad_norm = 0.0;
  std::string what;
};

struct BatchResult {
  std::vector<SampleRow> rows;
  int violations = 0, failed = 0, blowups = 0;
};

BatchResult run_batch(const LevelSet& level, int count, std::uint64_t seed,
                      const BatchConfig& cfg, bool with_pesin, bool with_rprime,
                      double pesin_T) {
  if (count <= 0) throw ConfigError("sample_count must be positive");
  const auto& sys = *level.system;
  const auto samples = systems::liouville_sample(level, count, seed, cfg.sampler);

  BatchResult res;
  res.rows.resize(count);
  parallel_for(count, cfg.workers, [&](int i) {
    SampleRow& row = res.rows[i];
    const PhasePoint& z = samples[i];
    row.grad_norm = sys.grad_h(z).norm();
    try {
      row.bound = bound_integrand(sys, z, cfg.curvature);
      if (with_pesin) {
        const auto spec =
            lyapunov_spectrum(sys, z, pesin_T, cfg.renorm_interval, cfg.integrator);
        row.chi = spec.chi;
      }
      if (with_rprime) {
        UnstableConfig ucfg = cfg.unstable;
        ucfg.curvature = cfg.curvature;
        ucfg.integrator = cfg.integrator;
        const RiccatiState vst = unstable_solution(sys, z, ucfg);
        const auto rc = jacobi::reduced_curvature(sys, z, cfg.curvature);
        row.rprime = r_prime(vst.V, rc.symmetrized);
        row.symmetric = (vst.V * vst.V + rc.symmetrized).norm() <= 1e-4;
        row.blowup = vst.blowup;
      }
    } catch (const HypothesisViolationError& e) {
      row.status = SampleStatus::violation;
      row.what = e.what();
    } catch (const Error& e) {
      row.status = SampleStatus::failed;
      row.what = e.what();
    }
  });
  for (const auto& row : res.rows) {
    if (row.status == SampleStatus::violation) ++res.violations;
    if (row.status == SampleStatus::failed) ++res.failed;
    if (row.blowup) ++res.blowups;
  }
  const int bad = res.violations + res.failed;
  if (res.violations > cfg.exclusion_cap * count)
    throw HypothesisViolationError(
        "hypothesis violations on " + std::to_string(res.violations) + " of " +
            std::to_string(count) + " samples",
        static_cast<double>(res.violations) / count);
  if (bad > cfg.exclusion_cap * count)
    throw NumericalError("excluded " + std::to_string(bad) + " of " +
                         std::to_string(count) + " samples (cap exceeded)");
  return res;
}

std::vector<double> kept_column(const BatchResult& res, double SampleRow::* col) {
  std::vector<double> xs;
  xs.reserve(res.rows.size());
  for (const auto& row : res.rows)
    if (row.status == SampleStatus::ok) xs.push_back(row.*col);
  return xs;
}

}  // namespace

Estimate entropy_bound(const LevelSet& level, int sample_count, std::uint64_t seed,
                       const BatchConfig& cfg) {
  const BatchResult res = run_batch(level, sample_count, seed, cfg, false, false, 0.0);
  return make_estimate(kept_column(res, &SampleRow::bound));
}

Estimate entropy_pesin(const LevelSet& level, int sample_count, double T,
                       std::uint64_t seed, const BatchConfig& cfg) {
  const BatchResult res = run_batch(level, sample_count, seed, cfg, true, false, T);
  return make_estimate(kept_column(res, &SampleRow::chi));
}

EntropyReport entropy_report(const LevelSet& level, int sample_count, std::uint64_t seed,
                             const BatchConfig& cfg, bool with_rprime,
                             std::vector<SampleOutcome>* rows) {
  const BatchResult res =
      run_batch(level, sample_count, seed, cfg, true, with_rprime, cfg.lyapunov_T);
  if (rows) {
    rows->clear();
    for (size_t i = 0; i < res.rows.size(); ++i) {
      const auto& r = res.rows[i];
      SampleOutcome o;
      o.index = static_cast<int>(i);
      o.status = r.status == SampleStatus::ok
                     ? "ok"
                     : (r.status == SampleStatus::violation ? "violation" : "failed");
      o.bound_integrand = r.bound;
      o.chi = r.chi;
      o.rprime = r.rprime;
      o.symmetric_jacobi = r.symmetric;
      o.grad_norm = r.grad_norm;
      o.message = r.what;
      rows->push_back(std::move(o));
    }
  }
  EntropyReport rep;
  rep.sample_count = sample_count;
  rep.excluded = res.failed + res.violations;
  rep.violations = res.violations;
  rep.blowups = res.blowups;
  rep.bound = make_estimate(kept_column(res, &SampleRow::bound));
  rep.pesin = make_estimate(kept_column(res, &SampleRow::chi));
  if (with_rprime) rep.rprime = make_estimate(kept_column(res, &SampleRow::rprime));
  rep.equality_gap = rep.pesin.value - rep.bound.value;
  const double comb =
      std::sqrt(rep.bound.std_error * rep.bound.std_error +
                rep.pesin.std_error * rep.pesin.std_error);
  rep.gap_sigmas = comb > 0.0 ? std::abs(rep.equality_gap) / comb
                              : (rep.equality_gap == 0.0 ? 0.0
                                                         : std::numeric_limits<double>::infinity());
  rep.min_grad_norm = std::numeric_limits<double>::infinity();
  for (const auto& row : res.rows) {
    rep.min_grad_norm = std::min(rep.min_grad_norm, row.grad_norm);
    if (row.symmetric) ++rep.symmetric_jacobi_count;
  }
  return rep;
}

}  // namespace hamcurv::entropy
