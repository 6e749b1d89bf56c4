#pragma once

#include <stdexcept>
#include <string>

namespace zubov {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised by Expr::parse; `offset` is the byte offset into the input text.
struct ParseError : Error {
  ParseError(const std::string& msg, std::size_t offset_)
      : Error(msg + " (at byte " + std::to_string(offset_) + ")"), offset(offset_) {}
  std::size_t offset;
};

/// Raised by point evaluation on domain violations (division by zero,
/// log of a nonpositive value, sqrt of a negative value). `path` names the
/// offending node as a root-to-node trail.
struct EvalError : Error {
  EvalError(const std::string& msg, std::string path_)
      : Error(msg + " [node " + path_ + "]"), path(std::move(path_)) {}
  std::string path;
};

/// Raised by interval evaluation when an interval provably enters an
/// invalid domain (e.g. log over an interval with hi <= 0).
struct IntervalDomainError : Error {
  using Error::Error;
};

/// Raised when differentiating an expression containing min/max.
struct NonDifferentiableError : Error {
  using Error::Error;
};

/// Invalid user-facing configuration (system construction, run config, CLI).
struct ConfigError : Error {
  using Error::Error;
};

/// Lyapunov solve attempted for a matrix that is not Hurwitz (or the
/// solve is singular / produces a non-positive-definite result).
struct NotHurwitzError : Error {
  using Error::Error;
};

/// omega() requested at a point with gamma <= 0 (outside the safe set).
struct UnsafePointError : Error {
  using Error::Error;
};

/// Training diverged (non-finite loss or gradient).
struct TrainingAbort : Error {
  using Error::Error;
};

/// Scalar function argument outside its domain (e.g. beta of a negative
/// value, phi of a w outside [0,1]).
struct DomainError : Error {
  using Error::Error;
};

/// Adaptive step controller drove the step below the representable floor.
struct StepSizeUnderflow : Error {
  using Error::Error;
};

}  // namespace zubov
