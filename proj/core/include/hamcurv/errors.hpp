#pragma once

#include <stdexcept>
#include <string>

namespace hamcurv {

/// Base class for all toolkit errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent experiment configuration.
struct ConfigError : Error {
  using Error::Error;
};

/// Operation requested at a critical point of h (grad h = 0).
struct CriticalPointError : Error {
  using Error::Error;
};

/// Frame rank-deficient, non-Lagrangian input, or dimension drop.
struct DegenerateFrameError : Error {
  using Error::Error;
};

/// Subspaces fail a transversality requirement.
struct TransversalityError : Error {
  TransversalityError(const std::string& what, int defect_dim_)
      : Error(what), defect_dim(defect_dim_) {}
  int defect_dim = 0;
};

/// Jacobi curve not regular at the working scale (fit residual, conditioning,
/// monotonicity gate).
struct RegularityError : Error {
  using Error::Error;
};

/// A standing hypothesis of the estimate is violated (e.g. positive reduced
/// curvature eigenvalue beyond the clamp tolerance).
struct HypothesisViolationError : Error {
  HypothesisViolationError(const std::string& what, double witness_)
      : Error(what), witness(witness_) {}
  double witness = 0.0;  ///< offending eigenvalue or measured quantity
};

/// Newton failures, non-convergence, overflow and similar numerical trouble.
struct NumericalError : Error {
  using Error::Error;
};

}  // namespace hamcurv
