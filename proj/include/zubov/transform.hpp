#pragma once

#include <span>

#include "zubov/errors.hpp"

namespace zubov {

/// Monotone map from accumulated cost values V in [0, inf] onto [0, 1].
/// Both families satisfy beta(0) = 0, beta' = (1 - beta) * phi(beta),
/// beta(s) -> 1 as s -> inf.
enum class BetaKind { Exp, Tanh };

struct BetaFamily {
  BetaKind kind = BetaKind::Tanh;
  double alpha = 0.1;
};

/// exp:  1 - e^{-alpha s}      tanh:  tanh(alpha s)
/// s must be >= 0; +inf maps to exactly 1.
double beta(const BetaFamily& b, double s);

/// Inverse of beta on [0, 1); diagnostic use.
double beta_inverse(const BetaFamily& b, double w);

/// phi evaluated at a w value in [0,1]: exp -> alpha, tanh -> alpha(1+w).
double phi_of_w(const BetaFamily& b, double w);

/// Smallest cap with beta(cap) >= 1 - target; values above it are
/// indistinguishable from 1 at the target resolution.
double v_cap_for(const BetaFamily& b, double target = 1e-6);

/// PDE residual in w-form: grad_w . f_tilde + phi(w) (1-w) ||x||^2.
/// Zero on the exact solution; squared by the training loss.
double zubov_residual(const BetaFamily& b, double w, std::span<const double> grad_w,
                      std::span<const double> f_tilde, std::span<const double> x);

}  // namespace zubov
