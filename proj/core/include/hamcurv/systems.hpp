#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "hamcurv/errors.hpp"
#include "hamcurv/linalg.hpp"
#include "hamcurv/rng.hpp"

/// Hamiltonian system definitions: callback-based h with gradient and Hessian,
/// the built-in model families, level sets and Liouville sampling.
namespace hamcurv::systems {

/// Point of phase space, momenta first.  The ambient 2n-vector is (p, q).
struct PhasePoint {
  Vec p;
  Vec q;

  int n() const { return static_cast<int>(p.size()); }
  Vec ambient() const {
    Vec z(2 * n());
    z << p, q;
    return z;
  }
  static PhasePoint from_ambient(const Vec& z) {
    const int n = static_cast<int>(z.size()) / 2;
    return PhasePoint{z.head(n), z.tail(n)};
  }
};

/// Per-position-coordinate topology flag: nullopt = unbounded, value = period.
struct Topology {
  std::vector<std::optional<double>> periods;

  static Topology unbounded(int n) { return Topology{std::vector<std::optional<double>>(n)}; }
  static Topology torus(int n, double period) {
    return Topology{std::vector<std::optional<double>>(n, period)};
  }
  bool any_periodic() const {
    for (const auto& o : periods)
      if (o) return true;
    return false;
  }
  /// Wrap position coordinates into [0, L); momenta are never wrapped.
  void wrap(Vec& q) const;
};

enum class FamilyTag { mechanical, geodesic2d, mechanical_on_metric, custom };

/// 2D Riemannian metric with analytic derivatives to second order.
struct Metric2D {
  std::function<Mat(const Vec&)> g;                 ///< 2x2 SPD
  std::function<Mat(const Vec&, int)> dg;           ///< d g / d q_i
  std::function<Mat(const Vec&, int, int)> d2g;     ///< d^2 g / d q_i d q_j

  static Metric2D euclidean();
  /// Upper half-plane y > 0, g = y^{-2} I (Gauss curvature -1).
  static Metric2D hyperbolic_half_plane();
  /// Round sphere chart q = (theta, phi), g = diag(1, sin^2 theta) (curvature +1).
  static Metric2D sphere_chart();
};

/// Potential with analytic gradient and Hessian.
struct Potential {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
  std::function<Mat(const Vec&)> hessian;

  static Potential zero(int n);
};

struct HamiltonianSystem {
  int n = 0;
  std::function<double(const PhasePoint&)> eval_h;
  std::function<Vec(const PhasePoint&)> grad_h;   ///< 2n, (dh/dp, dh/dq)
  std::function<Mat(const PhasePoint&)> hess_h;   ///< 2n x 2n symmetric
  Topology topology;
  FamilyTag family = FamilyTag::custom;

  // Family extras, used by the separable integrator and the closed forms.
  std::optional<Potential> potential;              // mechanical families
  std::shared_ptr<const Metric2D> metric;          // geodesic families

  double h(const PhasePoint& z) const { return eval_h(z); }
  bool separable() const { return family == FamilyTag::mechanical; }
};

/// vf(z) = Omega^{-1} grad h(z) = (-dh/dq, dh/dp).
/// Throws on non-finite gradient; returns zero (critical point) when
/// |grad h| vanishes -- callers that cannot proceed there must check.
Vec hamiltonian_vf(const HamiltonianSystem& sys, const PhasePoint& z);

bool is_critical_point(const HamiltonianSystem& sys, const PhasePoint& z,
                       double tol = 1e-13);

HamiltonianSystem mechanical(int n, Potential U, Topology topology);
HamiltonianSystem geodesic2d(const Metric2D& metric,
                             Topology topology = Topology::unbounded(2));
HamiltonianSystem mechanical_on_metric(const Metric2D& metric, Potential U,
                                       Topology topology = Topology::unbounded(2));

/// Regular energy level {h = E}.
struct LevelSet {
  std::shared_ptr<const HamiltonianSystem> system;
  double energy = 0.0;
  /// Minimal |grad h| observed while sampling; must stay positive.
  double regularity_floor = 0.0;
};

LevelSet make_level_set(std::shared_ptr<const HamiltonianSystem> system, double energy);

struct SamplerOptions {
  /// Sampling box for unbounded position coordinates (per coordinate).
  Vec q_min, q_max;
  int max_rejections = 200000;
  int burn_in = 1000;           // Metropolis path
  int thinning = 10;            // Metropolis path
  double proposal_scale = 0.3;  // Metropolis tangent step
  int newton_steps = 3;         // level-set polish
};

/// Draw `count` points distributed per the normalized Liouville measure on the
/// level set.  Mechanical families use the exact microcanonical factorization
/// (q with density (2(E-U))^{(n-2)/2} by rejection, p uniform on the sphere of
/// radius sqrt(2(E-U))); other families use a Metropolis walk constrained to
/// the level set.  Deterministic given the seed.
std::vector<PhasePoint> liouville_sample(const LevelSet& level, int count,
                                         std::uint64_t seed,
                                         const SamplerOptions& opts = {});

}  // namespace hamcurv::systems
