#include "zubov/transform.hpp"

#include <cassert>
#include <cmath>
#include <limits>

namespace zubov {

double beta(const BetaFamily& b, double s) {
  if (std::isnan(s) || s < 0.0) throw DomainError("beta requires s >= 0");
  if (std::isinf(s)) return 1.0;
  switch (b.kind) {
    case BetaKind::Exp: return -std::expm1(-b.alpha * s);
    case BetaKind::Tanh: return std::tanh(b.alpha * s);
  }
  return 0.0;
}

double beta_inverse(const BetaFamily& b, double w) {
  if (std::isnan(w) || w < 0.0 || w >= 1.0) throw DomainError("beta_inverse requires w in [0,1)");
  switch (b.kind) {
    case BetaKind::Exp: return -std::log1p(-w) / b.alpha;
    case BetaKind::Tanh: return std::atanh(w) / b.alpha;
  }
  return 0.0;
}

double phi_of_w(const BetaFamily& b, double w) {
  if (std::isnan(w) || w < 0.0 || w > 1.0) throw DomainError("phi_of_w requires w in [0,1]");
  switch (b.kind) {
    case BetaKind::Exp: return b.alpha;
    case BetaKind::Tanh: return b.alpha * (1.0 + w);
  }
  return 0.0;
}

double v_cap_for(const BetaFamily& b, double target) {
  return beta_inverse(b, 1.0 - target);
}

double zubov_residual(const BetaFamily& b, double w, std::span<const double> grad_w,
                      std::span<const double> f_tilde, std::span<const double> x) {
  assert(grad_w.size() == f_tilde.size() && grad_w.size() == x.size());
  double advect = 0.0;
  for (std::size_t i = 0; i < grad_w.size(); ++i) advect += grad_w[i] * f_tilde[i];
  double nrm2 = 0.0;
  for (double xi : x) nrm2 += xi * xi;
  return advect + phi_of_w(b, w) * (1.0 - w) * nrm2;
}

}  // namespace zubov
