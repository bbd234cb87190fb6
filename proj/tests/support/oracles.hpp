#pragma once

// Test-side oracles and model builders.  Everything here is independent of
// the library's curvature/derivative pipeline: closed-form flows, finite
// differences, and direct propagation of the linear Jacobi system.

#include <cmath>
#include <functional>

#include "hamcurv/rng.hpp"
#include "hamcurv/systems.hpp"

namespace oracles {

using hamcurv::Mat;
using hamcurv::Rng;
using hamcurv::Vec;
namespace sys = hamcurv::systems;

inline constexpr double kPi = 3.14159265358979323846;

// ----------------------------------------------------------- model builders

inline sys::HamiltonianSystem free_particle(int n) {
  return sys::mechanical(n, sys::Potential::zero(n), sys::Topology::unbounded(n));
}

inline sys::HamiltonianSystem free_on_torus(int n, double period = 2 * kPi) {
  return sys::mechanical(n, sys::Potential::zero(n), sys::Topology::torus(n, period));
}

inline sys::HamiltonianSystem harmonic(int n, double k = 1.0) {
  sys::Potential pot{
      [k](const Vec& q) { return 0.5 * k * q.squaredNorm(); },
      [k](const Vec& q) { return Vec(k * q); },
      [k, n](const Vec&) { return Mat(k * Mat::Identity(n, n)); },
  };
  return sys::mechanical(n, std::move(pot), sys::Topology::unbounded(n));
}

inline sys::HamiltonianSystem pendulum() {
  sys::Potential pot{
      [](const Vec& q) { return -std::cos(q[0]); },
      [](const Vec& q) { return Vec(Vec::Constant(1, std::sin(q[0]))); },
      [](const Vec& q) { return Mat(Mat::Constant(1, 1, std::cos(q[0]))); },
  };
  return sys::mechanical(1, std::move(pot), sys::Topology::torus(1, 2 * kPi));
}

inline sys::HamiltonianSystem saddle(int n, double k = 1.0) {
  sys::Potential pot{
      [k](const Vec& q) { return -0.5 * k * q.squaredNorm(); },
      [k](const Vec& q) { return Vec(-k * q); },
      [k, n](const Vec&) { return Mat(-k * Mat::Identity(n, n)); },
  };
  return sys::mechanical(n, std::move(pot), sys::Topology::unbounded(n));
}

/// Random polynomial potential (quadratic + cubic), analytic derivatives.
inline sys::Potential poly_potential(int n, std::uint64_t seed) {
  Rng rng(seed);
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
  const Mat A = 0.5 * (a + a.transpose());
  const Vec b = rng.normal_vec(n);
  const Vec c = 0.3 * rng.normal_vec(n);
  return sys::Potential{
      [A, b, c](const Vec& q) {
        double cubic = 0.0;
        for (int i = 0; i < q.size(); ++i) cubic += c[i] * q[i] * q[i] * q[i];
        return 0.5 * q.dot(A * q) + b.dot(q) + 0.25 * cubic;
      },
      [A, b, c](const Vec& q) {
        Vec g = A * q + b;
        for (int i = 0; i < q.size(); ++i) g[i] += 0.75 * c[i] * q[i] * q[i];
        return g;
      },
      [A, c](const Vec& q) {
        Mat h = A;
        for (int i = 0; i < q.size(); ++i) h(i, i) += 1.5 * c[i] * q[i];
        return h;
      },
  };
}

/// Random trigonometric potential on the torus of the given period.
inline sys::Potential trig_potential(int n, double period, std::uint64_t seed) {
  Rng rng(seed);
  const double w = 2 * kPi / period;
  Vec amp(n), phase(n);
  for (int i = 0; i < n; ++i) {
    amp[i] = 0.3 + 0.5 * rng.uniform();
    phase[i] = rng.uniform(0.0, 2 * kPi);
  }
  return sys::Potential{
      [amp, phase, w](const Vec& q) {
        double s = 0.0;
        for (int i = 0; i < q.size(); ++i) s += amp[i] * std::cos(w * q[i] + phase[i]);
        return s;
      },
      [amp, phase, w](const Vec& q) {
        Vec g(q.size());
        for (int i = 0; i < q.size(); ++i) g[i] = -amp[i] * w * std::sin(w * q[i] + phase[i]);
        return g;
      },
      [amp, phase, w](const Vec& q) {
        Mat h = Mat::Zero(q.size(), q.size());
        for (int i = 0; i < q.size(); ++i)
          h(i, i) = -amp[i] * w * w * std::cos(w * q[i] + phase[i]);
        return h;
      },
  };
}

// ------------------------------------------------------- finite differences

inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                       double step = 1e-5) {
  Vec g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    const double hi = step * std::max(1.0, std::abs(x[i]));
    Vec xp = x, xm = x;
    xp[i] += hi;
    xm[i] -= hi;
    g[i] = (f(xp) - f(xm)) / (2.0 * hi);
  }
  return g;
}

inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x,
                       double step = 1e-5) {
  const Vec f0 = f(x);
  Mat j(f0.size(), x.size());
  for (int i = 0; i < x.size(); ++i) {
    const double hi = step * std::max(1.0, std::abs(x[i]));
    Vec xp = x, xm = x;
    xp[i] += hi;
    xm[i] -= hi;
    j.col(i) = (f(xp) - f(xm)) / (2.0 * hi);
  }
  return j;
}

// ------------------------------------------------- linear Jacobi-system path

/// Propagate the matrix solutions of  xi' = -eta, eta' = R(t) xi  with RK4 and
/// return V(t) = -eta xi^{-1} (the Riccati solution through the linear system).
inline Mat riccati_via_linear_system(const std::function<Mat(double)>& R_of_t,
                                     const Mat& v0, double t_end, int steps) {
  const int m = static_cast<int>(v0.rows());
  Mat xi = Mat::Identity(m, m);
  Mat eta = -v0;
  const double dt = t_end / steps;
  auto rhs = [&](double t, const Mat& x, const Mat& e, Mat& dx, Mat& de) {
    dx = -e;
    de = R_of_t(t) * x;
  };
  Mat k1x(m, m), k1e(m, m), k2x(m, m), k2e(m, m), k3x(m, m), k3e(m, m), k4x(m, m), k4e(m, m);
  for (int s = 0; s < steps; ++s) {
    const double t = s * dt;
    rhs(t, xi, eta, k1x, k1e);
    rhs(t + dt / 2, xi + dt / 2 * k1x, eta + dt / 2 * k1e, k2x, k2e);
    rhs(t + dt / 2, xi + dt / 2 * k2x, eta + dt / 2 * k2e, k3x, k3e);
    rhs(t + dt, xi + dt * k3x, eta + dt * k3e, k4x, k4e);
    xi += dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x);
    eta += dt / 6 * (k1e + 2 * k2e + 2 * k3e + k4e);
  }
  return -eta * xi.inverse();
}

// --------------------------------------------------------- random matrices

inline Mat random_psd(int d, Rng& rng, double shift = 0.0) {
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  return a.transpose() * a + shift * Mat::Identity(d, d);
}

inline Mat random_orthogonal(int d, Rng& rng) {
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(a);
  return qr.householderQ() * Mat::Identity(d, d);
}

/// Random Lagrangian frame of the standard 2n-space: graph of a random
/// symmetric matrix over the vertical.
inline Mat random_lagrangian(int n, Rng& rng) {
  Mat s(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s(i, j) = rng.normal();
  const Mat sym = 0.5 * (s + s.transpose());
  Mat frame(2 * n, n);
  frame.topRows(n) = Mat::Identity(n, n);
  frame.bottomRows(n) = sym;
  return frame;
}

}  // namespace oracles
