#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "zubov/system.hpp"

namespace zubov {

enum class IntegratorMethod { RK4Fixed, RK45Adaptive };

struct IntegratorOptions {
  IntegratorMethod method = IntegratorMethod::RK45Adaptive;
  double dt = 1e-2;     // fixed-step size (RK4Fixed)
  double rtol = 1e-8;   // adaptive tolerances (RK45Adaptive)
  double atol = 1e-10;
  double dt_max = 5.0;
  double t_max = 500.0;
  double r_conv = 1e-3;       // convergence ball radius
  double v_cap = 0.0;         // <= 0: derived so beta(v_cap) >= 1 - 1e-6
  double unsafe_margin = 1e-6;  // stop at gamma <= margin, before f_tilde degenerates
};

enum class OracleStatus : int { Converged = 0, ExitedUnsafe, ExitedROI, CapReached, Inconclusive };

const char* to_string(OracleStatus s);

struct OracleLabel {
  std::vector<double> x;
  double v_value = 0.0;  // +inf sentinel when the trajectory leaves the domain
  double w_value = 0.0;
  OracleStatus status = OracleStatus::Inconclusive;
  double t_elapsed = 0.0;
};

struct IntegrationResult {
  std::vector<double> x_end;
  double t_end = 0.0;
  double v_accum = 0.0;  // integral of ||x||^2 up to t_end
  OracleStatus status = OracleStatus::Inconclusive;
  bool step_underflow = false;
};

using TracePoint = std::pair<double, std::vector<double>>;

/// Ground-truth engine. Integrates the scaled flow with the augmented
/// cost state v' = ||x||^2 so the quadrature carries the integrator's
/// order. Event times (unsafe entry, ROI exit, convergence, cost cap) are
/// located by bisection to 1e-9 in t. Stateless per call: safe to share
/// one instance across threads.
class Oracle {
 public:
  explicit Oracle(const SystemSpec& s, IntegratorOptions opts = {});

  const SystemSpec& system() const { return *s_; }
  const IntegratorOptions& options() const { return opts_; }
  double v_cap() const { return v_cap_; }
  bool has_tail() const { return ptilde_.has_value(); }

  /// Advance the scaled flow from x0 until an event or t_max.
  IntegrationResult integrate(std::span<const double> x0,
                              std::vector<TracePoint>* trace = nullptr) const;

  /// Advance until min(t_stop, event); Inconclusive status means "reached
  /// t_stop without an event".
  IntegrationResult integrate_for(std::span<const double> x0, double t_stop,
                                  std::vector<TracePoint>* trace = nullptr) const;

  /// Advance the ORIGINAL field f (not f_tilde) with the same guards;
  /// used for audits and phase portraits.
  IntegrationResult simulate_original(std::span<const double> x0, double t_stop,
                                      std::vector<TracePoint>* trace = nullptr) const;

  /// V and W labels at x0. Converged trajectories get the linearized-flow
  /// tail x_end^T Ptilde x_end; leaving trajectories get the +inf / W = 1
  /// sentinel; CapReached likewise (indistinguishable from 1 by design).
  OracleLabel zubov_value(std::span<const double> x0) const;

  /// |V(x0) - (integral to t' + V at t'))| with t' = min(t, event time).
  /// Requires zubov_value(x0) finite.
  double dpp_residual(std::span<const double> x0, double t) const;

 private:
  const SystemSpec* s_;
  IntegratorOptions opts_;
  double v_cap_;
  std::optional<Eigen::MatrixXd> ptilde_;  // absent if f non-smooth or A-tilde not Hurwitz

  IntegrationResult run(std::span<const double> x0, double t_stop, bool scaled,
                        std::vector<TracePoint>* trace) const;
  double tail(std::span<const double> x) const;
};

enum class SampleStrategy { UniformRoi, Grid };

struct DatasetOptions {
  int count = 3000;  // UniformRoi: sample count; Grid: points per dimension
  SampleStrategy strategy = SampleStrategy::UniformRoi;
  std::optional<Box> grid_range;  // Grid only; defaults to the ROI
  std::uint64_t seed = 0;
  int threads = 1;
};

struct Dataset {
  std::vector<OracleLabel> labels;
  int converged = 0;
  int exited_unsafe = 0;
  int exited_roi = 0;
  int cap_reached = 0;
  int inconclusive_dropped = 0;  // Inconclusive points are not labeled
};

/// Deterministic for a fixed seed regardless of thread count: points are
/// generated up front and labeled independently.
Dataset generate_dataset(const SystemSpec& s, const IntegratorOptions& io,
                         const DatasetOptions& opts);

/// CSV with header x1,...,xn,V,W,status,t_elapsed; +inf as literal `inf`.
void write_labels_csv(const Dataset& d, int n, std::ostream& out);

}  // namespace zubov
