#include "zubov/system.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "zubov/errors.hpp"

namespace zubov {

namespace {

constexpr double kNoObstacle = -1e300;

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double xi : x) s += xi * xi;
  return s;
}

}  // namespace

SystemSpec::SystemSpec(SystemInit init)
    : n_(init.n),
      f_(std::move(init.f)),
      obstacles_(std::move(init.obstacles)),
      roi_(std::move(init.roi)),
      lambda_(init.lambda),
      k_(init.k),
      beta_(init.beta),
      origin_tolerance_(init.origin_tolerance),
      aggregation_(init.aggregation) {
  if (n_ < 1) throw ConfigError("system dimension must be >= 1");
  if (static_cast<int>(f_.size()) != n_)
    throw ConfigError("field must have exactly n components (got " +
                      std::to_string(f_.size()) + ", n = " + std::to_string(n_) + ")");
  for (const Expr& e : f_)
    if (e.dim() > n_) throw ConfigError("field component references x beyond dimension n");
  for (const Expr& e : obstacles_)
    if (e.dim() > n_) throw ConfigError("obstacle references x beyond dimension n");
  if (static_cast<int>(roi_.size()) != n_)
    throw ConfigError("roi must have exactly n dimensions");
  if (lambda_ <= 0.0) throw ConfigError("lambda must be positive");
  if (k_ < 1) throw ConfigError("k must be >= 1");
  if (beta_.alpha <= 0.0) throw ConfigError("beta alpha must be positive");
  if (origin_tolerance_ < 0.0) throw ConfigError("origin_tolerance must be >= 0");
  for (const Interval& d : roi_.dims)
    if (!(d.lo < 0.0 && 0.0 < d.hi))
      throw ConfigError("roi must strictly contain the origin");

  std::vector<double> zero(static_cast<std::size_t>(n_), 0.0);
  std::vector<double> f0(static_cast<std::size_t>(n_));
  field(zero, f0);
  if (std::sqrt(norm2(f0)) > origin_tolerance_)
    throw ConfigError("origin is not an equilibrium of f within origin_tolerance");

  gamma0_ = gamma(zero);
  if (!(gamma0_ > 0.0)) throw ConfigError("origin is not strictly safe (gamma(0) <= 0)");

  try {
    std::vector<Expr> jac;
    jac.reserve(static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_));
    for (const Expr& fi : f_)
      for (int j = 0; j < n_; ++j) jac.push_back(fi.derivative(j));
    jac_ = std::move(jac);
  } catch (const NonDifferentiableError&) {
    jac_.reset();  // jacobian accessors re-throw
  }
}

double SystemSpec::pow_k(double g) const {
  double r = g;
  for (int i = 1; i < k_; ++i) r *= g;
  return r;
}

double SystemSpec::h_max(std::span<const double> x) const {
  std::vector<double> scratch;
  return h_max(x, scratch);
}

double SystemSpec::h_max(std::span<const double> x, std::vector<double>& scratch) const {
  if (obstacles_.empty()) return kNoObstacle;
  double m = -std::numeric_limits<double>::infinity();
  for (const Expr& h : obstacles_) m = std::max(m, h.eval(x, scratch));
  return m;
}

double SystemSpec::gamma(std::span<const double> x) const {
  std::vector<double> scratch;
  return gamma(x, scratch);
}

double SystemSpec::gamma(std::span<const double> x, std::vector<double>& scratch) const {
  if (obstacles_.empty()) return 1.0;
  if (aggregation_ == GammaAggregation::Max) return 1.0 - h_max(x, scratch);
  double g = 1.0;
  for (const Expr& h : obstacles_) g *= 1.0 - h.eval(x, scratch);
  return g;
}

double SystemSpec::omega(std::span<const double> x) const {
  std::vector<double> scratch;
  double g = gamma(x, scratch);
  if (!(g > 0.0)) throw UnsafePointError("omega requested at an unsafe point (gamma <= 0)");
  return norm2(x) / (lambda_ * pow_k(g));
}

void SystemSpec::field(std::span<const double> x, std::span<double> out) const {
  std::vector<double> scratch;
  field(x, out, scratch);
}

void SystemSpec::field(std::span<const double> x, std::span<double> out,
                       std::vector<double>& scratch) const {
  for (int i = 0; i < n_; ++i) out[static_cast<std::size_t>(i)] = f_[static_cast<std::size_t>(i)].eval(x, scratch);
}

std::vector<double> SystemSpec::field(std::span<const double> x) const {
  std::vector<double> out(static_cast<std::size_t>(n_));
  field(x, out);
  return out;
}

void SystemSpec::scaled_field(std::span<const double> x, std::span<double> out) const {
  std::vector<double> scratch;
  scaled_field(x, out, scratch);
}

void SystemSpec::scaled_field(std::span<const double> x, std::span<double> out,
                              std::vector<double>& scratch) const {
  double factor = lambda_ * pow_k(gamma(x, scratch));
  field(x, out, scratch);
  for (double& v : out) v *= factor;
}

std::vector<double> SystemSpec::scaled_field(std::span<const double> x) const {
  std::vector<double> out(static_cast<std::size_t>(n_));
  scaled_field(x, out);
  return out;
}

Interval SystemSpec::h_max(const Box& b) const {
  if (obstacles_.empty()) return Interval{kNoObstacle, kNoObstacle};
  std::vector<Interval> scratch;
  Interval m = obstacles_.front().eval(b, scratch);
  for (std::size_t i = 1; i < obstacles_.size(); ++i)
    m = zubov::max(m, obstacles_[i].eval(b, scratch));
  return m;
}

Interval SystemSpec::gamma(const Box& b) const {
  if (obstacles_.empty()) return Interval{1.0, 1.0};
  std::vector<Interval> scratch;
  if (aggregation_ == GammaAggregation::Max) return Interval{1.0, 1.0} - h_max(b);
  Interval g{1.0, 1.0};
  for (const Expr& h : obstacles_) g = g * (Interval{1.0, 1.0} - h.eval(b, scratch));
  return g;
}

std::vector<Interval> SystemSpec::field(const Box& b) const {
  std::vector<Interval> out;
  out.reserve(f_.size());
  std::vector<Interval> scratch;
  for (const Expr& fi : f_) out.push_back(fi.eval(b, scratch));
  return out;
}

Eigen::MatrixXd SystemSpec::jacobian_at_origin() const {
  if (!jac_) throw NonDifferentiableError("field contains min/max; Jacobian unavailable");
  std::vector<double> zero(static_cast<std::size_t>(n_), 0.0);
  std::vector<double> scratch;
  Eigen::MatrixXd A(n_, n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j)
      A(i, j) = (*jac_)[static_cast<std::size_t>(i * n_ + j)].eval(zero, scratch);
  return A;
}

Eigen::MatrixXd SystemSpec::scaled_jacobian_at_origin() const {
  return lambda_ * pow_k(gamma0_) * jacobian_at_origin();
}

std::vector<std::vector<Interval>> SystemSpec::interval_jacobian(const Box& b) const {
  if (!jac_) throw NonDifferentiableError("field contains min/max; Jacobian unavailable");
  std::vector<Interval> scratch;
  std::vector<std::vector<Interval>> J(static_cast<std::size_t>(n_));
  for (int i = 0; i < n_; ++i) {
    J[static_cast<std::size_t>(i)].reserve(static_cast<std::size_t>(n_));
    for (int j = 0; j < n_; ++j)
      J[static_cast<std::size_t>(i)].push_back(
          (*jac_)[static_cast<std::size_t>(i * n_ + j)].eval(b, scratch));
  }
  return J;
}

bool is_hurwitz(const Eigen::MatrixXd& A, double tol) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) return false;
  return (es.eigenvalues().real().array() < -tol).all();
}

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n || Q.rows() != n || Q.cols() != n)
    throw ConfigError("solve_lyapunov requires square matrices of matching size");
  if ((Q - Q.transpose()).norm() > 1e-12 * (1.0 + Q.norm()))
    throw ConfigError("Q must be symmetric");
  if (Eigen::LLT<Eigen::MatrixXd>(Q).info() != Eigen::Success)
    throw ConfigError("Q must be positive definite");
  if (!is_hurwitz(A)) throw NotHurwitzError("A has an eigenvalue with real part >= -1e-9");

  // Unknowns: upper triangle of P, row-major. idx(i,j) for i <= j.
  auto idx = [n](int i, int j) { return i * n - i * (i + 1) / 2 + j; };
  const int m = n * (n + 1) / 2;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd rhs(m);
  for (int r = 0; r < n; ++r) {
    for (int c = r; c < n; ++c) {
      const int eq = idx(r, c);
      rhs(eq) = -Q(r, c);
      for (int k = 0; k < n; ++k) {
        // (A^T P + P A)(r,c) = sum_k A(k,r) P(k,c) + P(r,k) A(k,c)
        M(eq, idx(std::min(k, c), std::max(k, c))) += A(k, r);
        M(eq, idx(std::min(r, k), std::max(r, k))) += A(k, c);
      }
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
  if (!lu.isInvertible())
    throw NotHurwitzError("Lyapunov system is singular");
  Eigen::VectorXd p = lu.solve(rhs);

  Eigen::MatrixXd P(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) P(i, j) = P(j, i) = p(idx(i, j));

  if ((A.transpose() * P + P * A + Q).norm() > 1e-9)
    throw NotHurwitzError("Lyapunov residual exceeds tolerance");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
    throw NotHurwitzError("Lyapunov solution is not positive definite");
  return P;
}

Linearization make_linearization(const SystemSpec& s) {
  return make_linearization(s, Eigen::MatrixXd::Identity(s.dim(), s.dim()));
}

Linearization make_linearization(const SystemSpec& s, const Eigen::MatrixXd& Q) {
  Eigen::MatrixXd A = s.jacobian_at_origin();
  return Linearization{A, solve_lyapunov(A, Q), Q};
}

}  // namespace zubov
