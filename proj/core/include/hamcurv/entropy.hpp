#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "hamcurv/flow.hpp"
#include "hamcurv/jacobi.hpp"
#include "hamcurv/systems.hpp"

/// Lyapunov spectra on the reduced flow, the matrix Riccati machinery behind
/// the expanding-subspace operator, the bound integrand Tr sqrt(-R), and the
/// Monte Carlo estimates of both sides of the entropy inequality.
namespace hamcurv::entropy {

using systems::HamiltonianSystem;
using systems::LevelSet;
using systems::PhasePoint;

// ---------------------------------------------------------------- Lyapunov

struct LyapunovSpectrum {
  std::vector<double> exponents;  ///< reduced flow, sorted descending (2n-2 values)
  double chi = 0.0;               ///< sum of positive exponents
  double T = 0.0;
  double renorm_interval = 0.0;
  double pairing_defect = 0.0;    ///< max_i |l_i + l_{k-1-i}|
  /// (time, running exponent estimates) checkpoints
  std::vector<std::pair<double, std::vector<double>>> convergence_history;
};

/// Benettin-style QR iteration on the reduced tangent flow: push a full
/// Sigma-frame, re-project onto the moving reduced space, QR-renormalize every
/// renorm_interval, accumulate log |diag R|.
LyapunovSpectrum lyapunov_spectrum(const HamiltonianSystem& sys, const PhasePoint& z,
                                   double T, double renorm_interval,
                                   const flow::IntegratorConfig& icfg,
                                   double overflow_guard = 1e6);

// ----------------------------------------------------------------- Riccati

struct RiccatiConfig {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h0 = 1e-2;
  double hmin = 1e-12;
  double blowup_threshold = 1e6;
  long max_steps = 2000000;
};

struct RiccatiState {
  Mat V;
  double t = 0.0;
  bool blowup = false;
  double blowup_time = 0.0;
  double convergence_residual = 0.0;  ///< ||V_T - V_{2T}|| from the horizon doubling
  int rank = 0;
  int kernel_dim = 0;
};

/// Integrate V' = -V^2 - R(t) with an adaptive embedded Runge-Kutta pair,
/// symmetrizing after every accepted step.  Blowup (||V|| above the threshold)
/// is flagged on the returned state, not thrown.
RiccatiState riccati_integrate(const std::function<Mat(double)>& R_of_t, const Mat& V0,
                               double t0, double t1, const RiccatiConfig& cfg = {});

struct UnstableConfig {
  double horizon0 = 4.0;
  double max_horizon = 512.0;
  double conv_tol = 1e-6;
  double grid_dt = 0.25;  ///< spacing of curvature evaluations along the orbit
  RiccatiConfig riccati;
  flow::IntegratorConfig integrator;
  jacobi::CurvatureConfig curvature;
};

/// Limit of Riccati solutions started from V = 0 at increasingly remote
/// backward times: the graph operator of the expanding family at z.
/// The curvature along the orbit is checked to be nonpositive; violations
/// throw HypothesisViolationError.
RiccatiState unstable_solution(const HamiltonianSystem& sys, const PhasePoint& z,
                               const UnstableConfig& cfg);

/// Same doubling scheme for a caller-supplied curvature callback.
RiccatiState unstable_solution_from_callback(const std::function<Mat(double)>& R_of_t,
                                             int dim, const UnstableConfig& cfg);

// ----------------------------------------------------- traces and integrands

/// r' = (1/2) Tr[V0 - R0 (V0)^{-1}] on the orthogonal complement of ker V.
/// Throws when R does not vanish on ker V (inconsistent pair) or V0 is not
/// positive definite.
double r_prime(const Mat& V, const Mat& R, double ker_tol = 1e-8);

/// r = Tr[(V0 - R0 V0)(I + V0^2)^{-1}] on the same complement.
double r_full(const Mat& V, const Mat& R, double ker_tol = 1e-8);

/// Tr sqrt(-sym(R)) with the clamp rule: |mu| <= clamp_tol * ||R|| goes to 0,
/// a positive eigenvalue beyond that is a hypothesis violation.
double trace_sqrt_neg(const jacobi::CurvatureOperator& rhat, double clamp_tol = 1e-8);

/// Tr sqrt(-R-hat) at a phase point (reduced curvature + clamp).
double bound_integrand(const HamiltonianSystem& sys, const PhasePoint& z,
                       const jacobi::CurvatureConfig& cfg);

struct TraceInequalityResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double equality_defect = 0.0;  ///< ||sqrt(M) U - sqrt(N)||_F
};

/// Tr[MU + NU^{-1}] >= 2 Tr[sqrt(M) sqrt(N)] for M, N PSD and U PD;
/// equality iff sqrt(M) U = sqrt(N).
TraceInequalityResult trace_inequality(const Mat& m, const Mat& n, const Mat& u);

// -------------------------------------------------------------- Monte Carlo

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  int n_samples = 0;
};

struct BatchConfig {
  int workers = 1;
  bool bit_repro = false;       ///< fixed-arity tree reduction (always deterministic here)
  double exclusion_cap = 0.05;  ///< failed-sample fraction that fails the run
  double lyapunov_T = 200.0;
  double renorm_interval = 0.5;
  jacobi::CurvatureConfig curvature;
  flow::IntegratorConfig integrator;
  UnstableConfig unstable;
  systems::SamplerOptions sampler;
};

/// Monte Carlo mean of the bound integrand over Liouville samples.
Estimate entropy_bound(const LevelSet& level, int sample_count, std::uint64_t seed,
                       const BatchConfig& cfg);

/// Monte Carlo mean of chi (Pesin sum) over Liouville samples.
Estimate entropy_pesin(const LevelSet& level, int sample_count, double T,
                       std::uint64_t seed, const BatchConfig& cfg);

struct EntropyReport {
  Estimate bound;        ///< integral of Tr sqrt(-R-hat)
  Estimate pesin;        ///< integral of chi (entropy, Pesin sum)
  Estimate rprime;       ///< integral of r'
  double equality_gap = 0.0;  ///< pesin - bound
  double gap_sigmas = 0.0;    ///< |gap| in combined-stderr units
  int sample_count = 0;
  int excluded = 0;
  int violations = 0;
  int blowups = 0;
  int symmetric_jacobi_count = 0;  ///< samples with ||V' || below 1e-4 at convergence
  double min_grad_norm = 0.0;      ///< regularity floor observed on the samples
};

/// Per-sample diagnostics, exported for report CSVs.
struct SampleOutcome {
  int index = 0;
  std::string status;  ///< ok | violation | failed
  double bound_integrand = 0.0;
  double chi = 0.0;
  double rprime = 0.0;
  bool symmetric_jacobi = false;
  double grad_norm = 0.0;
  std::string message;
};

/// Both sides of the inequality plus diagnostics, from one sample batch.
/// `with_rprime` adds the converged-Riccati column (more expensive).
EntropyReport entropy_report(const LevelSet& level, int sample_count, std::uint64_t seed,
                             const BatchConfig& cfg, bool with_rprime = false,
                             std::vector<SampleOutcome>* rows = nullptr);

}  // namespace hamcurv::entropy
