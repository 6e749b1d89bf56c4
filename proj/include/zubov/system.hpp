#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "zubov/expr.hpp"
#include "zubov/interval.hpp"
#include "zubov/transform.hpp"

namespace zubov {

/// How multiple obstacle functions combine into the scaling factor gamma.
/// Max is the default: gamma = 1 - max_i h_i. Product: gamma = prod_i (1 - h_i).
enum class GammaAggregation { Max, Product };

struct SystemInit {
  int n = 0;
  std::vector<Expr> f;          // n components of the vector field
  std::vector<Expr> obstacles;  // h_i; unsafe where any h_i >= 1
  Box roi;                      // Omega; must strictly contain the origin
  double lambda = 0.1;
  int k = 1;
  BetaFamily beta;
  double origin_tolerance = 1e-9;
  GammaAggregation aggregation = GammaAggregation::Max;
};

/// Immutable system model. Validates on construction:
/// the origin is an equilibrium (||f(0)|| <= origin_tolerance), the origin
/// is strictly safe (gamma(0) > 0) and strictly inside the ROI, lambda > 0,
/// k >= 1, alpha > 0. All operations are pure; overloads taking a scratch
/// vector avoid per-call allocation on integrator hot paths.
class SystemSpec {
 public:
  explicit SystemSpec(SystemInit init);

  int dim() const { return n_; }
  const Box& roi() const { return roi_; }
  double lambda() const { return lambda_; }
  int k() const { return k_; }
  const BetaFamily& beta() const { return beta_; }
  GammaAggregation aggregation() const { return aggregation_; }
  const std::vector<Expr>& field_exprs() const { return f_; }
  const std::vector<Expr>& obstacle_exprs() const { return obstacles_; }

  /// max_i h_i(x); -1e300 when there are no obstacles.
  double h_max(std::span<const double> x) const;
  double h_max(std::span<const double> x, std::vector<double>& scratch) const;

  /// Scaling factor; positive exactly on the safe set. 1 with no obstacles.
  double gamma(std::span<const double> x) const;
  double gamma(std::span<const double> x, std::vector<double>& scratch) const;
  double gamma0() const { return gamma0_; }

  /// Proper indicator (1/lambda) ||x||^2 / gamma^k. Throws UnsafePointError
  /// where gamma <= 0.
  double omega(std::span<const double> x) const;

  /// Original field f and scaled field  f_tilde = lambda gamma^k f.
  /// The scaled field is defined everywhere (gamma may be negative inside
  /// obstacles); it vanishes on {gamma = 0}.
  void field(std::span<const double> x, std::span<double> out) const;
  void field(std::span<const double> x, std::span<double> out, std::vector<double>& scratch) const;
  std::vector<double> field(std::span<const double> x) const;
  void scaled_field(std::span<const double> x, std::span<double> out) const;
  void scaled_field(std::span<const double> x, std::span<double> out,
                    std::vector<double>& scratch) const;
  std::vector<double> scaled_field(std::span<const double> x) const;

  /// Interval enclosures over a box (verifier building blocks).
  Interval h_max(const Box& b) const;
  Interval gamma(const Box& b) const;
  std::vector<Interval> field(const Box& b) const;

  /// Jacobian of f at the origin and its scaled variant lambda gamma(0)^k A.
  /// Throw NonDifferentiableError if f contains min/max.
  Eigen::MatrixXd jacobian_at_origin() const;
  Eigen::MatrixXd scaled_jacobian_at_origin() const;

  /// Entrywise interval enclosure of the Jacobian of f over b.
  std::vector<std::vector<Interval>> interval_jacobian(const Box& b) const;

 private:
  int n_;
  std::vector<Expr> f_;
  std::vector<Expr> obstacles_;
  Box roi_;
  double lambda_;
  int k_;
  BetaFamily beta_;
  double origin_tolerance_;
  GammaAggregation aggregation_;
  double gamma0_ = 1.0;
  std::optional<std::vector<Expr>> jac_;  // row-major n*n, absent if f non-smooth

  double pow_k(double g) const;
};

/// True when every eigenvalue of A has real part < -tol.
bool is_hurwitz(const Eigen::MatrixXd& A, double tol = 1e-9);

/// Solves A^T P + P A = -Q for symmetric positive-definite P by a dense
/// solve on the n(n+1)/2 symmetric unknowns. Throws NotHurwitzError when A
/// is not Hurwitz, the solve is singular, the residual exceeds 1e-9, or P
/// is not positive definite. Q must be symmetric positive definite.
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q);

struct Linearization {
  Eigen::MatrixXd A;
  Eigen::MatrixXd P;
  Eigen::MatrixXd Q;
};

Linearization make_linearization(const SystemSpec& s);
Linearization make_linearization(const SystemSpec& s, const Eigen::MatrixXd& Q);

}  // namespace zubov
