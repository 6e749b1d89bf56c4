#pragma once

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "zubov/errors.hpp"
#include "zubov/rng.hpp"

namespace zubov {

// Soundness here does not come from directed rounding: every arithmetic
// result is widened outward by a relative slack plus an absolute floor,
// which dominates the worst-case rounding error of the double ops used.
// The slack is configurable; set it before any concurrent evaluation.
namespace detail {
inline std::atomic<double> interval_slack_rel{1e-12};
constexpr double interval_slack_abs = 1e-300;
}  // namespace detail

inline double interval_slack() {
  return detail::interval_slack_rel.load(std::memory_order_relaxed);
}
inline void set_interval_slack(double eta) {
  detail::interval_slack_rel.store(eta, std::memory_order_relaxed);
}

/// Closed interval [lo, hi] of finite doubles. Endpoints saturate at
/// +-DBL_MAX; an endpoint equal to +-DBL_MAX is treated as unbounded on
/// that side by contains(), so saturation never loses soundness.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  Interval(double point) : lo(point), hi(point) {}
  Interval(double lo_, double hi_) : lo(lo_), hi(hi_) { assert(lo <= hi); }

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  double mag() const { return std::max(std::fabs(lo), std::fabs(hi)); }

  bool contains(double v) const {
    bool above = v >= lo || lo <= -std::numeric_limits<double>::max();
    bool below = v <= hi || hi >= std::numeric_limits<double>::max();
    return above && below;
  }
  bool contains(const Interval& o) const {
    return contains(o.lo) && contains(o.hi);
  }
};

namespace detail {

inline double sat(double v) {
  constexpr double m = std::numeric_limits<double>::max();
  if (v > m) return m;
  if (v < -m) return -m;
  return v;  // NaN never arises: all inputs are finite and ops are guarded
}

inline Interval widen(double lo, double hi) {
  const double eta = interval_slack();
  lo = sat(lo);
  hi = sat(hi);
  double wl = eta * std::fabs(lo) + interval_slack_abs;
  double wh = eta * std::fabs(hi) + interval_slack_abs;
  return Interval{sat(lo - wl), sat(hi + wh)};
}

}  // namespace detail

inline Interval operator+(const Interval& a, const Interval& b) {
  return detail::widen(a.lo + b.lo, a.hi + b.hi);
}

inline Interval operator-(const Interval& a, const Interval& b) {
  return detail::widen(a.lo - b.hi, a.hi - b.lo);
}

inline Interval operator-(const Interval& a) {
  return detail::widen(-a.hi, -a.lo);
}

inline Interval operator*(const Interval& a, const Interval& b) {
  double p1 = detail::sat(a.lo * b.lo);
  double p2 = detail::sat(a.lo * b.hi);
  double p3 = detail::sat(a.hi * b.lo);
  double p4 = detail::sat(a.hi * b.hi);
  return detail::widen(std::min(std::min(p1, p2), std::min(p3, p4)),
                       std::max(std::max(p1, p2), std::max(p3, p4)));
}

/// Division. An exactly-zero divisor interval is a provable domain error.
/// A divisor merely straddling zero yields the whole (saturated) line,
/// which is sound for every point where the quotient is defined.
inline Interval operator/(const Interval& a, const Interval& b) {
  constexpr double m = std::numeric_limits<double>::max();
  if (b.lo == 0.0 && b.hi == 0.0)
    throw IntervalDomainError("interval division by zero");
  if (b.lo <= 0.0 && b.hi >= 0.0) return Interval{-m, m};
  double q1 = detail::sat(a.lo / b.lo);
  double q2 = detail::sat(a.lo / b.hi);
  double q3 = detail::sat(a.hi / b.lo);
  double q4 = detail::sat(a.hi / b.hi);
  return detail::widen(std::min(std::min(q1, q2), std::min(q3, q4)),
                       std::max(std::max(q1, q2), std::max(q3, q4)));
}

inline Interval sqr(const Interval& a) {
  double m1 = std::fabs(a.lo), m2 = std::fabs(a.hi);
  double big = std::max(m1, m2);
  double small = (a.lo <= 0.0 && a.hi >= 0.0) ? 0.0 : std::min(m1, m2);
  return detail::widen(detail::sat(small * small), detail::sat(big * big));
}

namespace detail {
inline double pow_int_pt(double base, int n) {
  double r = 1.0;
  double b = base;
  for (int e = n; e > 0; e >>= 1) {
    if (e & 1) r = sat(r * b);
    b = sat(b * b);
  }
  return r;
}
}  // namespace detail

/// Integer power, exponent >= 0. Even exponents account for the interior
/// minimum at zero when the interval straddles it.
inline Interval pow_int(const Interval& a, int n) {
  assert(n >= 0);
  if (n == 0) return detail::widen(1.0, 1.0);
  if (n == 1) return detail::widen(a.lo, a.hi);
  if (n % 2 == 1) {
    return detail::widen(detail::pow_int_pt(a.lo, n), detail::pow_int_pt(a.hi, n));
  }
  double m1 = std::fabs(a.lo), m2 = std::fabs(a.hi);
  double big = std::max(m1, m2);
  double small = (a.lo <= 0.0 && a.hi >= 0.0) ? 0.0 : std::min(m1, m2);
  return detail::widen(detail::pow_int_pt(small, n), detail::pow_int_pt(big, n));
}

namespace detail {
// Arguments this large make critical-point bookkeeping for sin/cos
// numerically fragile; fall back to the trivial enclosure instead.
constexpr double trig_arg_limit = 1e8;

inline bool has_point_of_form(double offset, double lo, double hi) {
  // Does offset + 2*pi*k lie in [lo, hi] for some integer k?
  constexpr double two_pi = 6.283185307179586476925286766559;
  double k = std::ceil((lo - offset) / two_pi);
  return offset + k * two_pi <= hi;
}
}  // namespace detail

inline Interval sin(const Interval& a) {
  constexpr double half_pi = 1.5707963267948966192313216916398;
  if (a.mag() > detail::trig_arg_limit || a.width() >= 6.2831853071795864)
    return Interval{-1.0, 1.0};
  double slo = std::sin(a.lo), shi = std::sin(a.hi);
  double lo = std::min(slo, shi), hi = std::max(slo, shi);
  if (detail::has_point_of_form(half_pi, a.lo, a.hi)) hi = 1.0;
  if (detail::has_point_of_form(-half_pi, a.lo, a.hi)) lo = -1.0;
  Interval r = detail::widen(lo, hi);
  return Interval{std::max(r.lo, -1.0), std::min(r.hi, 1.0)};
}

inline Interval cos(const Interval& a) {
  constexpr double pi = 3.1415926535897932384626433832795;
  if (a.mag() > detail::trig_arg_limit || a.width() >= 6.2831853071795864)
    return Interval{-1.0, 1.0};
  double clo = std::cos(a.lo), chi = std::cos(a.hi);
  double lo = std::min(clo, chi), hi = std::max(clo, chi);
  if (detail::has_point_of_form(0.0, a.lo, a.hi)) hi = 1.0;
  if (detail::has_point_of_form(pi, a.lo, a.hi)) lo = -1.0;
  Interval r = detail::widen(lo, hi);
  return Interval{std::max(r.lo, -1.0), std::min(r.hi, 1.0)};
}

inline Interval tanh(const Interval& a) {
  Interval r = detail::widen(std::tanh(a.lo), std::tanh(a.hi));
  return Interval{std::max(r.lo, -1.0), std::min(r.hi, 1.0)};
}

/// Range of tanh' = sech^2 over `a`: even, maximal at 0, decreasing in |t|.
inline Interval tanh_derivative(const Interval& a) {
  auto sech2 = [](double t) {
    double th = std::tanh(t);
    return 1.0 - th * th;
  };
  double m1 = std::fabs(a.lo), m2 = std::fabs(a.hi);
  double far = std::max(m1, m2);
  double near = (a.lo <= 0.0 && a.hi >= 0.0) ? 0.0 : std::min(m1, m2);
  Interval r = detail::widen(sech2(far), sech2(near));
  return Interval{std::max(r.lo, 0.0), std::min(r.hi, 1.0)};
}

inline Interval exp(const Interval& a) {
  Interval r = detail::widen(std::exp(a.lo), std::exp(a.hi));
  return Interval{std::max(r.lo, 0.0), r.hi};
}

/// log: provably invalid when hi <= 0. An interval straddling zero keeps
/// only its defined part, whose image is unbounded below; saturate.
inline Interval log(const Interval& a) {
  constexpr double m = std::numeric_limits<double>::max();
  if (a.hi <= 0.0) throw IntervalDomainError("log of a nonpositive interval");
  if (a.lo <= 0.0) return Interval{-m, detail::widen(0.0, std::log(a.hi)).hi};
  return detail::widen(std::log(a.lo), std::log(a.hi));
}

inline Interval sqrt(const Interval& a) {
  if (a.hi < 0.0) throw IntervalDomainError("sqrt of a negative interval");
  double lo = a.lo <= 0.0 ? 0.0 : std::sqrt(a.lo);
  return detail::widen(lo, std::sqrt(a.hi));
}

inline Interval max(const Interval& a, const Interval& b) {
  return detail::widen(std::max(a.lo, b.lo), std::max(a.hi, b.hi));
}

inline Interval min(const Interval& a, const Interval& b) {
  return detail::widen(std::min(a.lo, b.lo), std::min(a.hi, b.hi));
}

inline Interval hull(const Interval& a, const Interval& b) {
  return Interval{std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
}

/// Axis-aligned box: one interval per dimension.
struct Box {
  std::vector<Interval> dims;

  Box() = default;
  explicit Box(std::vector<Interval> d) : dims(std::move(d)) {}

  int size() const { return static_cast<int>(dims.size()); }

  double width(int i) const { return dims[static_cast<std::size_t>(i)].width(); }

  double min_width() const {
    double w = std::numeric_limits<double>::max();
    for (const auto& d : dims) w = std::min(w, d.width());
    return w;
  }

  double max_width() const {
    double w = 0.0;
    for (const auto& d : dims) w = std::max(w, d.width());
    return w;
  }

  /// Widest dimension; ties break toward the lowest index so splitting is
  /// deterministic.
  int widest_dim() const {
    int best = 0;
    double bw = dims.empty() ? 0.0 : dims[0].width();
    for (int i = 1; i < size(); ++i) {
      if (width(i) > bw) {
        bw = width(i);
        best = i;
      }
    }
    return best;
  }

  std::pair<Box, Box> bisect() const {
    int d = widest_dim();
    auto du = static_cast<std::size_t>(d);
    double m = dims[du].mid();
    Box a = *this, b = *this;
    a.dims[du] = Interval{dims[du].lo, m};
    b.dims[du] = Interval{m, dims[du].hi};
    return {std::move(a), std::move(b)};
  }

  bool contains(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != size()) return false;
    for (int i = 0; i < size(); ++i)
      if (x[static_cast<std::size_t>(i)] < dims[static_cast<std::size_t>(i)].lo ||
          x[static_cast<std::size_t>(i)] > dims[static_cast<std::size_t>(i)].hi)
        return false;
    return true;
  }

  bool contains(const Box& inner) const {
    if (inner.size() != size()) return false;
    for (int i = 0; i < size(); ++i) {
      auto iu = static_cast<std::size_t>(i);
      if (inner.dims[iu].lo < dims[iu].lo || inner.dims[iu].hi > dims[iu].hi)
        return false;
    }
    return true;
  }

  std::vector<double> center() const {
    std::vector<double> c(dims.size());
    for (std::size_t i = 0; i < dims.size(); ++i) c[i] = dims[i].mid();
    return c;
  }

  std::vector<double> sample(Rng& rng) const {
    std::vector<double> x(dims.size());
    for (std::size_t i = 0; i < dims.size(); ++i)
      x[i] = rng.uniform(dims[i].lo, dims[i].hi);
    return x;
  }
};

}  // namespace zubov
