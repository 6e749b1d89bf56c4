#include "zubov/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <thread>

#include "zubov/errors.hpp"
#include "zubov/rng.hpp"
#include "zubov/transform.hpp"

namespace zubov {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEventTolT = 1e-9;
constexpr double kProbeSubstep = 0.025;

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double xi : x) s += xi * xi;
  return s;
}

// Dormand-Prince 5(4) tableau.
constexpr double A21 = 1.0 / 5;
constexpr double A31 = 3.0 / 40, A32 = 9.0 / 40;
constexpr double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9;
constexpr double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561,
                 A54 = -212.0 / 729;
constexpr double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247,
                 A64 = 49.0 / 176, A65 = -5103.0 / 18656;
constexpr double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192,
                 B5 = -2187.0 / 6784, B6 = 11.0 / 84;
constexpr double E1 = 35.0 / 384 - 5179.0 / 57600, E3 = 500.0 / 1113 - 7571.0 / 16695,
                 E4 = 125.0 / 192 - 393.0 / 640, E5 = -2187.0 / 6784 + 92097.0 / 339200,
                 E6 = 11.0 / 84 - 187.0 / 2100, E7 = -1.0 / 40;

// Augmented-state integrator workspace: y = (x, v), v' = ||x||^2.
class Stepper {
 public:
  Stepper(const SystemSpec& s, bool scaled, const IntegratorOptions& o, double v_cap)
      : s_(&s), scaled_(scaled), o_(&o), v_cap_(v_cap), n_(s.dim()) {
    for (auto* k : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &ytmp_})
      k->resize(static_cast<std::size_t>(n_) + 1);
    have_k1_ = false;
  }

  int n() const { return n_; }

  void deriv(const std::vector<double>& y, std::vector<double>& dy) {
    std::span<const double> x(y.data(), static_cast<std::size_t>(n_));
    std::span<double> out(dy.data(), static_cast<std::size_t>(n_));
    if (scaled_)
      s_->scaled_field(x, out, scratch_);
    else
      s_->field(x, out, scratch_);
    dy[static_cast<std::size_t>(n_)] = norm2(x);
  }

  // First event triggered at y, in priority order; Inconclusive = none.
  OracleStatus triggered(const std::vector<double>& y) {
    std::span<const double> x(y.data(), static_cast<std::size_t>(n_));
    if (s_->gamma(x, scratch_) <= o_->unsafe_margin) return OracleStatus::ExitedUnsafe;
    const Box& roi = s_->roi();
    for (int i = 0; i < n_; ++i) {
      const Interval& d = roi.dims[static_cast<std::size_t>(i)];
      double xi = y[static_cast<std::size_t>(i)];
      if (xi <= d.lo || xi >= d.hi) return OracleStatus::ExitedROI;
    }
    if (y[static_cast<std::size_t>(n_)] >= v_cap_) return OracleStatus::CapReached;
    if (std::sqrt(norm2(x)) <= o_->r_conv) return OracleStatus::Converged;
    return OracleStatus::Inconclusive;
  }

  // One classic RK4 step of size h from y in place.
  void rk4_step(std::vector<double>& y, double h) {
    const std::size_t m = y.size();
    deriv(y, k1_);
    for (std::size_t i = 0; i < m; ++i) ytmp_[i] = y[i] + 0.5 * h * k1_[i];
    deriv(ytmp_, k2_);
    for (std::size_t i = 0; i < m; ++i) ytmp_[i] = y[i] + 0.5 * h * k2_[i];
    deriv(ytmp_, k3_);
    for (std::size_t i = 0; i < m; ++i) ytmp_[i] = y[i] + h * k3_[i];
    deriv(ytmp_, k4_);
    for (std::size_t i = 0; i < m; ++i)
      y[i] += h / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
    have_k1_ = false;  // k caches invalidated
  }

  // Integrate a copy of y0 forward by s with fixed RK4 substeps.
  void rk4_path(const std::vector<double>& y0, double s, std::vector<double>& out) {
    out = y0;
    if (s <= 0.0) return;
    int m = std::max(1, static_cast<int>(std::ceil(s / kProbeSubstep)));
    double h = s / m;
    for (int i = 0; i < m; ++i) rk4_step(out, h);
  }

  // One adaptive attempt of size h: fills ynew and the scaled error norm.
  void dopri_attempt(const std::vector<double>& y, double h, std::vector<double>& ynew,
                     double& err) {
    const std::size_t m = y.size();
    if (!have_k1_) {
      deriv(y, k1_);
      have_k1_ = true;
    }
    for (std::size_t i = 0; i < m; ++i) ytmp_[i] = y[i] + h * A21 * k1_[i];
    deriv(ytmp_, k2_);
    for (std::size_t i = 0; i < m; ++i) ytmp_[i] = y[i] + h * (A31 * k1_[i] + A32 * k2_[i]);
    deriv(ytmp_, k3_);
    for (std::size_t i = 0; i < m; ++i)
      ytmp_[i] = y[i] + h * (A41 * k1_[i] + A42 * k2_[i] + A43 * k3_[i]);
    deriv(ytmp_, k4_);
    for (std::size_t i = 0; i < m; ++i)
      ytmp_[i] = y[i] + h * (A51 * k1_[i] + A52 * k2_[i] + A53 * k3_[i] + A54 * k4_[i]);
    deriv(ytmp_, k5_);
    for (std::size_t i = 0; i < m; ++i)
      ytmp_[i] = y[i] + h * (A61 * k1_[i] + A62 * k2_[i] + A63 * k3_[i] + A64 * k4_[i] +
                             A65 * k5_[i]);
    deriv(ytmp_, k6_);
    for (std::size_t i = 0; i < m; ++i)
      ynew[i] = y[i] + h * (B1 * k1_[i] + B3 * k3_[i] + B4 * k4_[i] + B5 * k5_[i] +
                            B6 * k6_[i]);
    deriv(ynew, k7_);
    err = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double e = h * (E1 * k1_[i] + E3 * k3_[i] + E4 * k4_[i] + E5 * k5_[i] + E6 * k6_[i] +
                      E7 * k7_[i]);
      double sc = o_->atol + o_->rtol * std::max(std::fabs(y[i]), std::fabs(ynew[i]));
      err += (e / sc) * (e / sc);
    }
    err = std::sqrt(err / static_cast<double>(m));
  }

  void accept_fsal() {
    std::swap(k1_, k7_);  // FSAL: last stage of the accepted step is next k1
    have_k1_ = true;
  }
  void invalidate_k1() { have_k1_ = false; }

 private:
  const SystemSpec* s_;
  bool scaled_;
  const IntegratorOptions* o_;
  double v_cap_;
  int n_;
  bool have_k1_ = false;
  std::vector<double> k1_, k2_, k3_, k4_, k5_, k6_, k7_, ytmp_;
  std::vector<double> scratch_;
};

}  // namespace

const char* to_string(OracleStatus s) {
  switch (s) {
    case OracleStatus::Converged: return "Converged";
    case OracleStatus::ExitedUnsafe: return "ExitedUnsafe";
    case OracleStatus::ExitedROI: return "ExitedROI";
    case OracleStatus::CapReached: return "CapReached";
    case OracleStatus::Inconclusive: return "Inconclusive";
  }
  return "?";
}

Oracle::Oracle(const SystemSpec& s, IntegratorOptions opts) : s_(&s), opts_(opts) {
  if (opts_.t_max <= 0.0 || opts_.r_conv <= 0.0 || opts_.rtol <= 0.0 || opts_.atol <= 0.0 ||
      opts_.dt <= 0.0 || opts_.dt_max <= 0.0)
    throw ConfigError("integrator options must be positive");
  v_cap_ = opts_.v_cap > 0.0 ? opts_.v_cap : v_cap_for(s.beta());
  try {
    ptilde_ = solve_lyapunov(s.scaled_jacobian_at_origin(),
                             Eigen::MatrixXd::Identity(s.dim(), s.dim()));
  } catch (const Error&) {
    ptilde_.reset();  // tail correction skipped; Converged labels carry truncation bias
  }
}

double Oracle::tail(std::span<const double> x) const {
  if (!ptilde_) return 0.0;
  const int n = s_->dim();
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      acc += x[static_cast<std::size_t>(i)] * (*ptilde_)(i, j) * x[static_cast<std::size_t>(j)];
  return acc;
}

IntegrationResult Oracle::run(std::span<const double> x0, double t_stop, bool scaled,
                              std::vector<TracePoint>* trace) const {
  const int n = s_->dim();
  if (static_cast<int>(x0.size()) != n) throw ConfigError("initial point has wrong dimension");
  Stepper st(*s_, scaled, opts_, v_cap_);

  std::vector<double> y(static_cast<std::size_t>(n) + 1, 0.0);
  std::copy(x0.begin(), x0.end(), y.begin());

  IntegrationResult res;
  auto finish = [&](double t, OracleStatus status) {
    res.x_end.assign(y.begin(), y.begin() + n);
    res.t_end = t;
    res.v_accum = y[static_cast<std::size_t>(n)];
    res.status = status;
    if (trace && (trace->empty() || trace->back().first != t))
      trace->emplace_back(t, res.x_end);
    return res;
  };

  OracleStatus ev = st.triggered(y);
  if (trace) trace->emplace_back(0.0, std::vector<double>(x0.begin(), x0.end()));
  if (ev != OracleStatus::Inconclusive) {
    res.x_end.assign(x0.begin(), x0.end());
    res.status = ev;
    return res;
  }
  if (t_stop <= 0.0) return finish(0.0, OracleStatus::Inconclusive);

  const bool adaptive = opts_.method == IntegratorMethod::RK45Adaptive;
  double t = 0.0;
  double dt = adaptive ? std::min(1e-3, t_stop) : opts_.dt;
  std::vector<double> ynew(y.size()), ystart(y.size());

  while (t < t_stop) {
    double h = std::min(dt, t_stop - t);
    bool accepted = false;
    if (adaptive) {
      double err = 0.0;
      st.dopri_attempt(y, h, ynew, err);
      if (std::isfinite(err) && err <= 1.0) {
        accepted = true;
        double fac = err > 0.0 ? std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0) : 5.0;
        dt = std::min(h * fac, opts_.dt_max);
      } else {
        // Non-finite error (overflowing stages) shrinks maximally.
        dt = std::isfinite(err) ? h * std::clamp(0.9 * std::pow(err, -0.2), 0.2, 1.0)
                                : h * 0.2;
        st.invalidate_k1();  // k1 is at y; still valid, but keep the controller simple
        if (dt < 1e-14 * std::max(1.0, t)) {
          res.step_underflow = true;
          return finish(t, OracleStatus::Inconclusive);
        }
        continue;
      }
    } else {
      ynew = y;
      st.rk4_step(ynew, h);
      accepted = true;
    }

    if (!accepted) continue;
    OracleStatus hit = st.triggered(ynew);
    if (hit != OracleStatus::Inconclusive) {
      // Earliest crossing inside [t, t+h] by bisection; probes re-integrate
      // the prefix with fixed RK4 substeps.
      ystart = y;
      double lo = 0.0, hi = h;
      std::vector<double> yhi = ynew, ymid;
      OracleStatus sthi = hit;
      while (hi - lo > kEventTolT) {
        double mid = 0.5 * (lo + hi);
        st.rk4_path(ystart, mid, ymid);
        OracleStatus sm = st.triggered(ymid);
        if (sm != OracleStatus::Inconclusive) {
          hi = mid;
          yhi = ymid;
          sthi = sm;
        } else {
          lo = mid;
        }
      }
      y = yhi;
      return finish(t + hi, sthi);
    }

    y.swap(ynew);
    t += h;
    if (adaptive) st.accept_fsal();
    if (trace) trace->emplace_back(t, std::vector<double>(y.begin(), y.begin() + n));
  }
  return finish(t_stop, OracleStatus::Inconclusive);
}

IntegrationResult Oracle::integrate(std::span<const double> x0,
                                    std::vector<TracePoint>* trace) const {
  return run(x0, opts_.t_max, /*scaled=*/true, trace);
}

IntegrationResult Oracle::integrate_for(std::span<const double> x0, double t_stop,
                                        std::vector<TracePoint>* trace) const {
  return run(x0, std::min(t_stop, opts_.t_max), /*scaled=*/true, trace);
}

IntegrationResult Oracle::simulate_original(std::span<const double> x0, double t_stop,
                                            std::vector<TracePoint>* trace) const {
  return run(x0, t_stop, /*scaled=*/false, trace);
}

OracleLabel Oracle::zubov_value(std::span<const double> x0) const {
  IntegrationResult res = integrate(x0);
  OracleLabel lab;
  lab.x.assign(x0.begin(), x0.end());
  lab.status = res.status;
  lab.t_elapsed = res.t_end;
  switch (res.status) {
    case OracleStatus::Converged:
      lab.v_value = res.v_accum + tail(res.x_end);
      lab.w_value = beta(s_->beta(), lab.v_value);
      break;
    case OracleStatus::ExitedUnsafe:
    case OracleStatus::ExitedROI:
    case OracleStatus::CapReached:
    case OracleStatus::Inconclusive:
      lab.v_value = kInf;
      lab.w_value = 1.0;
      break;
  }
  return lab;
}

double Oracle::dpp_residual(std::span<const double> x0, double t) const {
  if (t < 0.0) throw DomainError("dpp_residual requires t >= 0");
  OracleLabel full = zubov_value(x0);
  if (!std::isfinite(full.v_value))
    throw DomainError("dpp_residual requires a finite value at x0");
  IntegrationResult part = integrate_for(x0, t);
  OracleLabel rest = zubov_value(part.x_end);
  if (!std::isfinite(rest.v_value))
    throw DomainError("dpp_residual: value at the intermediate point is not finite");
  return std::fabs(full.v_value - (part.v_accum + rest.v_value));
}

Dataset generate_dataset(const SystemSpec& s, const IntegratorOptions& io,
                         const DatasetOptions& opts) {
  if (opts.count < 0) throw ConfigError("dataset count must be >= 0");
  const int n = s.dim();

  std::vector<std::vector<double>> points;
  if (opts.strategy == SampleStrategy::UniformRoi) {
    Rng rng(opts.seed);
    points.reserve(static_cast<std::size_t>(opts.count));
    for (int i = 0; i < opts.count; ++i) points.push_back(s.roi().sample(rng));
  } else {
    const Box& range = opts.grid_range ? *opts.grid_range : s.roi();
    if (static_cast<int>(range.size()) != n) throw ConfigError("grid range has wrong dimension");
    const int g = opts.count;
    if (g > 0) {
      std::size_t total = 1;
      for (int d = 0; d < n; ++d) total *= static_cast<std::size_t>(g);
      points.reserve(total);
      std::vector<int> idx(static_cast<std::size_t>(n), 0);
      std::vector<double> x(static_cast<std::size_t>(n));
      for (std::size_t flat = 0; flat < total; ++flat) {
        for (int d = 0; d < n; ++d) {
          const Interval& dim = range.dims[static_cast<std::size_t>(d)];
          x[static_cast<std::size_t>(d)] =
              g == 1 ? dim.mid()
                     : dim.lo + (dim.hi - dim.lo) * static_cast<double>(idx[static_cast<std::size_t>(d)]) /
                           static_cast<double>(g - 1);
        }
        points.push_back(x);
        for (int d = n - 1; d >= 0; --d) {
          auto du = static_cast<std::size_t>(d);
          if (++idx[du] < g) break;
          idx[du] = 0;
        }
      }
    }
  }

  Oracle oracle(s, io);
  std::vector<OracleLabel> raw(points.size());
  int threads = std::max(1, opts.threads);
  if (threads > 1 && points.size() > 1) {
    std::vector<std::thread> pool;
    std::size_t chunk = (points.size() + static_cast<std::size_t>(threads) - 1) /
                        static_cast<std::size_t>(threads);
    for (int w = 0; w < threads; ++w) {
      std::size_t b = static_cast<std::size_t>(w) * chunk;
      std::size_t e = std::min(points.size(), b + chunk);
      if (b >= e) break;
      pool.emplace_back([&, b, e] {
        for (std::size_t i = b; i < e; ++i) raw[i] = oracle.zubov_value(points[i]);
      });
    }
    for (auto& th : pool) th.join();
  } else {
    for (std::size_t i = 0; i < points.size(); ++i) raw[i] = oracle.zubov_value(points[i]);
  }

  Dataset out;
  out.labels.reserve(raw.size());
  for (auto& lab : raw) {
    switch (lab.status) {
      case OracleStatus::Converged: ++out.converged; break;
      case OracleStatus::ExitedUnsafe: ++out.exited_unsafe; break;
      case OracleStatus::ExitedROI: ++out.exited_roi; break;
      case OracleStatus::CapReached: ++out.cap_reached; break;
      case OracleStatus::Inconclusive:
        ++out.inconclusive_dropped;
        continue;
    }
    out.labels.push_back(std::move(lab));
  }
  return out;
}

void write_labels_csv(const Dataset& d, int n, std::ostream& out) {
  for (int i = 0; i < n; ++i) out << "x" << (i + 1) << ",";
  out << "V,W,status,t_elapsed\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (const OracleLabel& lab : d.labels) {
    for (int i = 0; i < n; ++i) {
      put(lab.x[static_cast<std::size_t>(i)]);
      out << ",";
    }
    put(lab.v_value);
    out << ",";
    put(lab.w_value);
    out << "," << to_string(lab.status) << ",";
    put(lab.t_elapsed);
    out << "\n";
  }
}

}  // namespace zubov
