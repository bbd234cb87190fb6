#include "hamcurv/systems.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hamcurv::systems {

void Topology::wrap(Vec& q) const {
  for (int i = 0; i < q.size(); ++i) {
    if (i < static_cast<int>(periods.size()) && periods[i]) {
      const double L = *periods[i];
      q[i] -= L * std::floor(q[i] / L);
    }
  }
}

Potential Potential::zero(int n) {
  return Potential{
      [](const Vec&) { return 0.0; },
      [n](const Vec&) { return Vec(Vec::Zero(n)); },
      [n](const Vec&) { return Mat(Mat::Zero(n, n)); },
  };
}

Metric2D Metric2D::euclidean() {
  return Metric2D{
      [](const Vec&) { return Mat(Mat::Identity(2, 2)); },
      [](const Vec&, int) { return Mat(Mat::Zero(2, 2)); },
      [](const Vec&, int, int) { return Mat(Mat::Zero(2, 2)); },
  };
}

Metric2D Metric2D::hyperbolic_half_plane() {
  auto check = [](const Vec& q) {
    if (!(q[1] > 0.0)) throw NumericalError("hyperbolic metric: y <= 0");
  };
  return Metric2D{
      [check](const Vec& q) {
        check(q);
        return Mat(std::pow(q[1], -2.0) * Mat::Identity(2, 2));
      },
      [check](const Vec& q, int i) {
        check(q);
        if (i == 0) return Mat(Mat::Zero(2, 2));
        return Mat(-2.0 * std::pow(q[1], -3.0) * Mat::Identity(2, 2));
      },
      [check](const Vec& q, int i, int j) {
        check(q);
        if (i == 1 && j == 1) return Mat(6.0 * std::pow(q[1], -4.0) * Mat::Identity(2, 2));
        return Mat(Mat::Zero(2, 2));
      },
  };
}

Metric2D Metric2D::sphere_chart() {
  auto check = [](const Vec& q) {
    if (std::abs(std::sin(q[0])) < 1e-12)
      throw NumericalError("sphere chart: metric singular at sin(theta) = 0");
  };
  return Metric2D{
      [check](const Vec& q) {
        check(q);
        Mat g = Mat::Zero(2, 2);
        g(0, 0) = 1.0;
        g(1, 1) = std::sin(q[0]) * std::sin(q[0]);
        return g;
      },
      [check](const Vec& q, int i) {
        check(q);
        Mat d = Mat::Zero(2, 2);
        if (i == 0) d(1, 1) = std::sin(2.0 * q[0]);
        return d;
      },
      [check](const Vec& q, int i, int j) {
        check(q);
        Mat d = Mat::Zero(2, 2);
        if (i == 0 && j == 0) d(1, 1) = 2.0 * std::cos(2.0 * q[0]);
        return d;
      },
  };
}

Vec hamiltonian_vf(const HamiltonianSystem& sys, const PhasePoint& z) {
  const Vec g = sys.grad_h(z);
  if (!g.allFinite()) throw NumericalError("non-finite gradient of h");
  const int n = sys.n;
  Vec vf(2 * n);
  vf.head(n) = -g.tail(n);  // pdot = -dh/dq
  vf.tail(n) = g.head(n);   // qdot =  dh/dp
  return vf;
}

bool is_critical_point(const HamiltonianSystem& sys, const PhasePoint& z, double tol) {
  return sys.grad_h(z).norm() <= tol;
}

HamiltonianSystem mechanical(int n, Potential U, Topology topology) {
  HamiltonianSystem sys;
  sys.n = n;
  sys.topology = std::move(topology);
  sys.family = FamilyTag::mechanical;
  auto pot = std::make_shared<Potential>(std::move(U));
  sys.potential = *pot;
  sys.eval_h = [pot](const PhasePoint& z) { return 0.5 * z.p.squaredNorm() + pot->value(z.q); };
  sys.grad_h = [pot, n](const PhasePoint& z) {
    Vec g(2 * n);
    g.head(n) = z.p;
    g.tail(n) = pot->gradient(z.q);
    return g;
  };
  sys.hess_h = [pot, n](const PhasePoint& z) {
    Mat h = Mat::Zero(2 * n, 2 * n);
    h.topLeftCorner(n, n) = Mat::Identity(n, n);
    h.bottomRightCorner(n, n) = pot->hessian(z.q);
    return h;
  };
  return sys;
}

namespace {

// Derivatives of A = g^{-1}:  A_k = -A g_k A,
// A_kl = A g_l A g_k A - A g_kl A + A g_k A g_l A.
struct MetricKinetic {
  std::shared_ptr<const Metric2D> m;

  double h(const PhasePoint& z) const {
    const Mat a = m->g(z.q).inverse();
    return 0.5 * z.p.dot(a * z.p);
  }
  Vec grad(const PhasePoint& z) const {
    const Mat a = m->g(z.q).inverse();
    Vec g(4);
    g.head(2) = a * z.p;
    for (int k = 0; k < 2; ++k) {
      const Mat ak = -a * m->dg(z.q, k) * a;
      g(2 + k) = 0.5 * z.p.dot(ak * z.p);
    }
    return g;
  }
  Mat hess(const PhasePoint& z) const {
    const Mat a = m->g(z.q).inverse();
    Mat h = Mat::Zero(4, 4);
    h.topLeftCorner(2, 2) = a;
    Mat ak[2];
    for (int k = 0; k < 2; ++k) {
      ak[k] = -a * m->dg(z.q, k) * a;
      h.block(0, 2 + k, 2, 1) = ak[k] * z.p;
      h.block(2 + k, 0, 1, 2) = (ak[k] * z.p).transpose();
    }
    for (int k = 0; k < 2; ++k)
      for (int l = 0; l < 2; ++l) {
        const Mat gk = m->dg(z.q, k), gl = m->dg(z.q, l), gkl = m->d2g(z.q, k, l);
        const Mat akl = a * gl * a * gk * a - a * gkl * a + a * gk * a * gl * a;
        h(2 + k, 2 + l) = 0.5 * z.p.dot(akl * z.p);
      }
    return h;
  }
};

}  // namespace

HamiltonianSystem geodesic2d(const Metric2D& metric, Topology topology) {
  HamiltonianSystem sys;
  sys.n = 2;
  sys.topology = std::move(topology);
  sys.family = FamilyTag::geodesic2d;
  sys.metric = std::make_shared<Metric2D>(metric);
  MetricKinetic kin{sys.metric};
  sys.eval_h = [kin](const PhasePoint& z) { return kin.h(z); };
  sys.grad_h = [kin](const PhasePoint& z) { return kin.grad(z); };
  sys.hess_h = [kin](const PhasePoint& z) { return kin.hess(z); };
  return sys;
}

HamiltonianSystem mechanical_on_metric(const Metric2D& metric, Potential U,
                                       Topology topology) {
  HamiltonianSystem sys;
  sys.n = 2;
  sys.topology = std::move(topology);
  sys.family = FamilyTag::mechanical_on_metric;
  sys.metric = std::make_shared<Metric2D>(metric);
  auto pot = std::make_shared<Potential>(std::move(U));
  sys.potential = *pot;
  MetricKinetic kin{sys.metric};
  sys.eval_h = [kin, pot](const PhasePoint& z) { return kin.h(z) + pot->value(z.q); };
  sys.grad_h = [kin, pot](const PhasePoint& z) {
    Vec g = kin.grad(z);
    g.tail(2) += pot->gradient(z.q);
    return g;
  };
  sys.hess_h = [kin, pot](const PhasePoint& z) {
    Mat h = kin.hess(z);
    h.bottomRightCorner(2, 2) += pot->hessian(z.q);
    return h;
  };
  return sys;
}

LevelSet make_level_set(std::shared_ptr<const HamiltonianSystem> system, double energy) {
  if (!system) throw ConfigError("level set needs a system");
  if (!std::isfinite(energy)) throw ConfigError("level set energy must be finite");
  return LevelSet{std::move(system), energy, 0.0};
}

namespace {

void newton_polish(const HamiltonianSystem& sys, PhasePoint& z, double energy, int steps) {
  for (int it = 0; it < steps; ++it) {
    const double r = sys.eval_h(z) - energy;
    if (std::abs(r) <= 1e-14 * std::max(1.0, std::abs(energy))) break;
    const Vec g = sys.grad_h(z);
    const double g2 = g.squaredNorm();
    if (g2 <= 0.0) throw CriticalPointError("level-set projection hit a critical point");
    const Vec step = (r / g2) * g;
    z.p -= step.head(sys.n);
    z.q -= step.tail(sys.n);
  }
}

struct QDomain {
  Vec lo, hi;
  double volume = 0.0;
};

QDomain q_domain(const HamiltonianSystem& sys, const SamplerOptions& opts) {
  QDomain d;
  d.lo = Vec(sys.n);
  d.hi = Vec(sys.n);
  d.volume = 1.0;
  for (int i = 0; i < sys.n; ++i) {
    const auto& per = sys.topology.periods;
    if (i < static_cast<int>(per.size()) && per[i]) {
      d.lo[i] = 0.0;
      d.hi[i] = *per[i];
    } else {
      if (opts.q_min.size() <= i || opts.q_max.size() <= i)
        throw ConfigError("unbounded coordinate needs a sampling box (q_min/q_max)");
      d.lo[i] = opts.q_min[i];
      d.hi[i] = opts.q_max[i];
    }
    if (!(d.hi[i] > d.lo[i])) throw ConfigError("empty sampling box");
    d.volume *= d.hi[i] - d.lo[i];
  }
  return d;
}

std::vector<PhasePoint> sample_mechanical(const LevelSet& level, int count,
                                          std::uint64_t seed, const SamplerOptions& opts) {
  const auto& sys = *level.system;
  const auto& pot = *sys.potential;
  const double E = level.energy;
  const int n = sys.n;
  const double expo = 0.5 * (n - 2);
  const QDomain dom = q_domain(sys, opts);

  // Envelope for the q-density (2(E-U))^{(n-2)/2} via a deterministic scan.
  double env = 0.0;
  const int grid = n <= 2 ? 64 : 24;
  std::vector<int> idx(n, 0);
  const long total = static_cast<long>(std::pow(grid, n));
  for (long c = 0; c < total; ++c) {
    long rem = c;
    Vec q(n);
    for (int i = 0; i < n; ++i) {
      q[i] = dom.lo[i] + (dom.hi[i] - dom.lo[i]) * ((rem % grid) + 0.5) / grid;
      rem /= grid;
    }
    const double s = 2.0 * (E - pot.value(q));
    if (s > 0.0) env = std::max(env, std::pow(s, expo));
  }
  if (env == 0.0) throw NumericalError("liouville sampler: region {U < E} appears empty");
  env *= 1.25;

  Rng rng(seed);
  std::vector<PhasePoint> out;
  out.reserve(count);
  int rejects = 0;
  while (static_cast<int>(out.size()) < count) {
    Vec q(n);
    for (int i = 0; i < n; ++i) q[i] = rng.uniform(dom.lo[i], dom.hi[i]);
    const double s = 2.0 * (E - pot.value(q));
    const double dens = s > 0.0 ? std::pow(s, expo) : 0.0;
    if (rng.uniform(0.0, env) >= dens) {
      if (++rejects > opts.max_rejections)
        throw NumericalError("liouville sampler: rejection budget exhausted");
      continue;
    }
    Vec dir = rng.normal_vec(n);
    while (dir.norm() < 1e-12) dir = rng.normal_vec(n);
    dir.normalize();
    PhasePoint z{std::sqrt(s) * dir, q};
    newton_polish(sys, z, E, opts.newton_steps);
    out.push_back(std::move(z));
  }
  return out;
}

std::vector<PhasePoint> sample_metropolis(const LevelSet& level, int count,
                                          std::uint64_t seed, const SamplerOptions& opts) {
  const auto& sys = *level.system;
  const double E = level.energy;
  const int n = sys.n;
  const QDomain dom = q_domain(sys, opts);
  Rng rng(seed);

  // Initial point: box center, momentum scaled onto the level set.
  PhasePoint z;
  z.q = 0.5 * (dom.lo + dom.hi);
  bool seeded = false;
  for (int attempt = 0; attempt < 64 && !seeded; ++attempt) {
    Vec dir = rng.normal_vec(n).normalized();
    double t = 1.0;
    for (int it = 0; it < 60; ++it) {
      z.p = t * dir;
      const double f = sys.eval_h(z) - E;
      if (std::abs(f) < 1e-12 * std::max(1.0, std::abs(E))) {
        seeded = true;
        break;
      }
      const Vec g = sys.grad_h(z);
      const double df = g.head(n).dot(dir);
      if (std::abs(df) < 1e-14) break;
      t -= f / df;
      if (!std::isfinite(t)) break;
    }
  }
  if (!seeded) throw NumericalError("liouville sampler: failed to reach the level set");

  auto project = [&](PhasePoint& w) -> bool {
    for (int it = 0; it < 30; ++it) {
      const double r = sys.eval_h(w) - E;
      if (std::abs(r) <= 1e-12 * std::max(1.0, std::abs(E))) return true;
      const Vec g = sys.grad_h(w);
      const double g2 = g.squaredNorm();
      if (g2 <= 1e-30) return false;
      const Vec step = (r / g2) * g;
      w.p -= step.head(n);
      w.q -= step.tail(n);
    }
    return false;
  };

  double wz = 1.0 / sys.grad_h(z).norm();
  std::vector<PhasePoint> out;
  out.reserve(count);
  const long want = opts.burn_in + static_cast<long>(count) * opts.thinning;
  for (long step = 0; step < want; ++step) {
    Vec d = opts.proposal_scale * rng.normal_vec(2 * n);
    const Vec g = sys.grad_h(z);
    d -= (g.dot(d) / g.squaredNorm()) * g;  // tangent proposal
    PhasePoint w{z.p + d.head(n), z.q + d.tail(n)};
    bool inside = true;
    for (int i = 0; i < n; ++i) {
      const auto& per = sys.topology.periods;
      const bool periodic = i < static_cast<int>(per.size()) && per[i].has_value();
      if (!periodic && (w.q[i] < dom.lo[i] || w.q[i] > dom.hi[i])) inside = false;
    }
    if (inside && project(w)) {
      sys.topology.wrap(w.q);
      const double ww = 1.0 / sys.grad_h(w).norm();
      if (rng.uniform() < std::min(1.0, ww / wz)) {
        z = w;
        wz = ww;
      }
    }
    if (step >= opts.burn_in && (step - opts.burn_in) % opts.thinning == 0) {
      PhasePoint keep = z;
      newton_polish(sys, keep, E, opts.newton_steps);
      out.push_back(std::move(keep));
      if (static_cast<int>(out.size()) == count) break;
    }
  }
  if (static_cast<int>(out.size()) != count)
    throw NumericalError("liouville sampler: walk did not produce enough samples");
  return out;
}

}  // namespace

std::vector<PhasePoint> liouville_sample(const LevelSet& level, int count,
                                         std::uint64_t seed, const SamplerOptions& opts) {
  if (count < 0) throw ConfigError("liouville_sample: negative count");
  if (count == 0) return {};
  if (!level.system) throw ConfigError("liouville_sample: empty level set");
  const auto& sys = *level.system;
  std::vector<PhasePoint> pts;
  if (sys.family == FamilyTag::mechanical)
    pts = sample_mechanical(level, count, seed, opts);
  else
    pts = sample_metropolis(level, count, seed, opts);
  for (auto& z : pts) sys.topology.wrap(z.q);
  return pts;
}

}  // namespace hamcurv::systems
