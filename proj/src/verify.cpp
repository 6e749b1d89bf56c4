#include "zubov/verify.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>

#include "zubov/errors.hpp"

namespace zubov {

namespace {

std::size_t uz(int v) { return static_cast<std::size_t>(v); }

void check_config(const VerifyConfig& cfg) {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("verify config: ") + what);
  };
  need(cfg.decrease_margin > 0, "decrease_margin must be positive");
  need(cfg.min_box_width > 0, "min_box_width must be positive");
  need(cfg.max_boxes > 0, "max_boxes must be positive");
  need(cfg.bisection_tol > 0, "bisection_tol must be positive");
  need(cfg.inner_radius > 0, "inner_radius must be positive");
  need(cfg.unsafe_clearance > 0, "unsafe_clearance must be positive");
}

Interval quad_form(const Eigen::MatrixXd& P, const Box& b) {
  const int n = b.size();
  Interval q{0.0};
  for (int i = 0; i < n; ++i) {
    q = q + Interval{P(i, i)} * sqr(b.dims[uz(i)]);
    for (int j = i + 1; j < n; ++j)
      q = q + Interval{2.0 * P(i, j)} * (b.dims[uz(i)] * b.dims[uz(j)]);
  }
  return q;
}

}  // namespace

BBResult branch_and_bound(const std::function<PredVerdict(const Box&)>& pred,
                          const Box& root, const VerifyConfig& cfg) {
  check_config(cfg);
  BBResult out;
  std::vector<Box> stack;
  stack.push_back(root);
  while (!stack.empty()) {
    if (out.boxes_processed >= cfg.max_boxes) {
      out.status = BBStatus::ResourceExhausted;
      out.candidate = std::move(stack.back());
      return out;
    }
    Box b = std::move(stack.back());
    stack.pop_back();
    ++out.boxes_processed;
    if (pred(b) == PredVerdict::Refuted) continue;
    if (b.max_width() <= cfg.min_box_width) {
      out.status = BBStatus::Violated;
      out.candidate = std::move(b);
      return out;
    }
    auto [first, second] = b.bisect();
    stack.push_back(std::move(second));
    stack.push_back(std::move(first));
  }
  out.status = BBStatus::CertifiedEmpty;
  return out;
}

InnerQuadratic verify_inner_quadratic(const SystemSpec& s, const Linearization& lin,
                                      double r0) {
  if (r0 <= 0) throw ConfigError("inner radius must be positive");
  InnerQuadratic out;
  const int n = s.dim();

  Box ball{std::vector<Interval>(uz(n), Interval{-r0, r0})};
  std::vector<std::vector<Interval>> J;
  try {
    J = s.interval_jacobian(ball);
  } catch (const Error& e) {
    out.failure = std::string("no interval Jacobian on the ball: ") + e.what();
    return out;
  }

  // C >= sup over the ball of |J_f(x) - A|_2, via the Frobenius norm of the
  // entrywise deviation bounds.
  double frob2 = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Interval& e = J[uz(i)][uz(j)];
      const double a = lin.A(i, j);
      const double dev = std::max(std::fabs(e.hi - a), std::fabs(a - e.lo));
      frob2 += dev * dev;
    }
  out.deviation_bound = std::sqrt(frob2);

  Eigen::MatrixXd S = lin.A.transpose() * lin.P + lin.P * lin.A;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  out.lambda_max = es.eigenvalues().maxCoeff();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ep(lin.P);
  out.p_norm = ep.eigenvalues().cwiseAbs().maxCoeff();

  const double margin = out.lambda_max + 2.0 * out.p_norm * out.deviation_bound;
  if (margin < 0) {
    out.certified = true;
    out.mu = -margin;
  } else {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "lambda_max(A'P+PA) + 2|P| C = %.6g + %.6g >= 0 at radius %g",
                  out.lambda_max, 2.0 * out.p_norm * out.deviation_bound, r0);
    out.failure = buf;
  }
  return out;
}

BBResult verify_bridge(const MLPParams& net, const SystemSpec& s,
                       const Linearization& lin, double c1, double rho,
                       const VerifyConfig& cfg) {
  auto pred = [&](const Box& b) {
    if (interval_forward(net, b).lo > c1) return PredVerdict::Refuted;
    if (quad_form(lin.P, b).hi < rho) return PredVerdict::Refuted;
    return PredVerdict::Unknown;
  };
  return branch_and_bound(pred, s.roi(), cfg);
}

BBResult verify_decrease(const MLPParams& net, const SystemSpec& s, double c1,
                         double c2, const VerifyConfig& cfg) {
  check_config(cfg);
  if (c1 >= c2) return BBResult{};  // empty annulus
  const double delta = cfg.decrease_margin;
  auto pred = [&](const Box& b) {
    Interval w = interval_forward(net, b);
    if (w.hi < c1 || w.lo > c2) return PredVerdict::Refuted;
    std::vector<Interval> g = interval_input_gradient(net, b);
    std::vector<Interval> f = s.field(b);
    Interval dot{0.0};
    for (int i = 0; i < s.dim(); ++i) dot = dot + g[uz(i)] * f[uz(i)];
    if (dot.hi < -delta) return PredVerdict::Refuted;
    return PredVerdict::Unknown;
  };
  return branch_and_bound(pred, s.roi(), cfg);
}

BBResult verify_separation(const MLPParams& net, const SystemSpec& s, double c2,
                           const VerifyConfig& cfg) {
  check_config(cfg);
  const double cap = 1.0 - cfg.unsafe_clearance;
  auto obstacle_pred = [&](const Box& b) {
    if (interval_forward(net, b).lo > c2) return PredVerdict::Refuted;
    if (s.h_max(b).hi < cap) return PredVerdict::Refuted;
    return PredVerdict::Unknown;
  };
  BBResult total = branch_and_bound(obstacle_pred, s.roi(), cfg);
  if (total.status != BBStatus::CertifiedEmpty) return total;

  // Outer shell: thin slabs along every face of Omega must be free of
  // {W <= c2}, so the sublevel set is compactly inside the ROI.
  const double depth = 4.0 * cfg.min_box_width;
  auto shell_pred = [&](const Box& b) {
    return interval_forward(net, b).lo > c2 ? PredVerdict::Refuted
                                            : PredVerdict::Unknown;
  };
  for (int d = 0; d < s.dim(); ++d) {
    for (int side = 0; side < 2; ++side) {
      Box shell = s.roi();
      Interval& dim = shell.dims[uz(d)];
      dim = side == 0 ? Interval{dim.lo, std::min(dim.hi, dim.lo + depth)}
                      : Interval{std::max(dim.lo, dim.hi - depth), dim.hi};
      BBResult r = branch_and_bound(shell_pred, shell, cfg);
      total.boxes_processed += r.boxes_processed;
      if (r.status != BBStatus::CertifiedEmpty) {
        total.status = r.status;
        total.candidate = std::move(r.candidate);
        return total;
      }
    }
  }
  return total;
}

const char* to_string(CertStatus s) {
  switch (s) {
    case CertStatus::Certified: return "Certified";
    case CertStatus::Failed: return "Failed";
    case CertStatus::ResourceExhausted: return "ResourceExhausted";
  }
  return "?";
}

QuadraticBaseline quadratic_baseline(const SystemSpec& s, const Linearization& lin,
                                     const VerifyConfig& cfg) {
  check_config(cfg);
  QuadraticBaseline out;
  InnerQuadratic inner = verify_inner_quadratic(s, lin, cfg.inner_radius);
  if (!inner.certified) {
    out.failure = "inner certificate failed: " + inner.failure;
    return out;
  }

  const int n = s.dim();
  const double r0 = cfg.inner_radius;
  const double delta = cfg.decrease_margin;
  const double cap = 1.0 - cfg.unsafe_clearance;
  const double depth = 4.0 * cfg.min_box_width;

  // One full certification attempt at a fixed level.
  auto certify = [&](double rho) {
    auto inside_inner_ball = [&](const Box& b) {
      for (int i = 0; i < n; ++i)
        if (b.dims[uz(i)].lo <= -r0 || b.dims[uz(i)].hi >= r0) return false;
      return true;
    };
    auto decrease_pred = [&](const Box& b) {
      if (quad_form(lin.P, b).lo > rho) return PredVerdict::Refuted;
      if (inside_inner_ball(b)) return PredVerdict::Refuted;
      std::vector<Interval> f = s.field(b);
      Interval dot{0.0};
      for (int i = 0; i < n; ++i) {
        Interval row{0.0};
        for (int j = 0; j < n; ++j)
          row = row + Interval{lin.P(i, j)} * b.dims[uz(j)];
        dot = dot + Interval{2.0} * row * f[uz(i)];
      }
      if (dot.hi < -delta) return PredVerdict::Refuted;
      return PredVerdict::Unknown;
    };
    auto obstacle_pred = [&](const Box& b) {
      if (quad_form(lin.P, b).lo > rho) return PredVerdict::Refuted;
      if (s.h_max(b).hi < cap) return PredVerdict::Refuted;
      return PredVerdict::Unknown;
    };
    auto shell_pred = [&](const Box& b) {
      return quad_form(lin.P, b).lo > rho ? PredVerdict::Refuted
                                          : PredVerdict::Unknown;
    };
    BBResult r = branch_and_bound(decrease_pred, s.roi(), cfg);
    out.boxes += r.boxes_processed;
    if (r.status != BBStatus::CertifiedEmpty) return false;
    r = branch_and_bound(obstacle_pred, s.roi(), cfg);
    out.boxes += r.boxes_processed;
    if (r.status != BBStatus::CertifiedEmpty) return false;
    for (int d = 0; d < n; ++d) {
      for (int side = 0; side < 2; ++side) {
        Box shell = s.roi();
        Interval& dim = shell.dims[uz(d)];
        dim = side == 0 ? Interval{dim.lo, std::min(dim.hi, dim.lo + depth)}
                        : Interval{std::max(dim.lo, dim.hi - depth), dim.hi};
        r = branch_and_bound(shell_pred, shell, cfg);
        out.boxes += r.boxes_processed;
        if (r.status != BBStatus::CertifiedEmpty) return false;
      }
    }
    return true;
  };

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ep(lin.P);
  const double rho_inner = r0 * r0 * ep.eigenvalues().minCoeff();
  const double rho_roof = quad_form(lin.P, s.roi()).hi;

  double lo = 0.0;
  double c = std::min(std::max(rho_inner, cfg.bisection_tol), rho_roof);
  double hi = rho_roof;
  if (certify(c)) {
    lo = c;
    while (lo < rho_roof) {
      c = std::min(2.0 * c, rho_roof);
      if (certify(c)) {
        lo = c;
        if (c == rho_roof) break;
      } else {
        hi = c;
        break;
      }
    }
  } else {
    hi = c;
  }
  while (hi - lo > cfg.bisection_tol * std::max(1.0, lo)) {
    const double mid = 0.5 * (lo + hi);
    if (certify(mid))
      lo = mid;
    else
      hi = mid;
  }

  if (lo > 0.0) {
    out.certified = true;
    out.rho = lo;
  } else {
    out.failure = "no positive quadratic level certifies";
  }
  return out;
}

CertificationReport bisect_levels(const MLPParams& net, const SystemSpec& s,
                                  const Linearization& lin, const VerifyConfig& cfg) {
  check_config(cfg);
  CertificationReport rep;
  rep.delta = cfg.decrease_margin;
  rep.eta = interval_slack();

  auto as_counterexample = [](const BBResult& r, const std::string& predicate) {
    Counterexample ce;
    ce.predicate = predicate;
    if (r.candidate) ce.point = r.candidate->center();
    return ce;
  };

  InnerQuadratic inner = verify_inner_quadratic(s, lin, cfg.inner_radius);
  if (!inner.certified) {
    rep.status = CertStatus::Failed;
    rep.counterexample = Counterexample{{}, "inner quadratic: " + inner.failure};
    return rep;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ep(lin.P);
  const double rho = cfg.inner_radius * cfg.inner_radius *
                     ep.eigenvalues().minCoeff();

  // Largest c1 whose sublevel set provably sits inside the quadratic region:
  // double upward from the resolution floor, then bisect.
  BBResult last_bridge_fail;
  auto bridge_ok = [&](double c1) {
    BBResult r = verify_bridge(net, s, lin, c1, rho, cfg);
    rep.boxes_bridge += r.boxes_processed;
    if (r.status != BBStatus::CertifiedEmpty) last_bridge_fail = std::move(r);
    return r.status == BBStatus::CertifiedEmpty;
  };
  double c1 = 0.0, chi = 0.0;
  double c = cfg.bisection_tol;
  if (!bridge_ok(c)) {
    rep.status = last_bridge_fail.status == BBStatus::ResourceExhausted
                     ? CertStatus::ResourceExhausted
                     : CertStatus::Failed;
    rep.counterexample = as_counterexample(
        last_bridge_fail, "W(x) <= c1 while x'Px >= rho (bridge)");
    return rep;
  }
  c1 = c;
  chi = 1.0;
  while (2.0 * c < 1.0) {
    c *= 2.0;
    if (bridge_ok(c)) {
      c1 = c;
    } else {
      chi = c;
      break;
    }
  }
  while (chi - c1 > cfg.bisection_tol) {
    const double mid = 0.5 * (c1 + chi);
    if (bridge_ok(mid))
      c1 = mid;
    else
      chi = mid;
  }
  rep.c1 = c1;

  // Largest c2 in (c1, 1) passing decrease and separation.
  BBResult last_c2_fail;
  std::string last_c2_pred;
  auto outer_ok = [&](double c2) {
    BBResult r = verify_decrease(net, s, c1, c2, cfg);
    rep.boxes_decrease += r.boxes_processed;
    if (r.status != BBStatus::CertifiedEmpty) {
      last_c2_fail = std::move(r);
      last_c2_pred = "c1 <= W(x) <= c2 while grad W . f >= -delta (decrease)";
      return false;
    }
    r = verify_separation(net, s, c2, cfg);
    rep.boxes_separation += r.boxes_processed;
    if (r.status != BBStatus::CertifiedEmpty) {
      last_c2_fail = std::move(r);
      last_c2_pred = "W(x) <= c2 intersects the unsafe margin or the ROI shell "
                     "(separation)";
      return false;
    }
    return true;
  };
  double lo = c1, hi = 1.0;
  while (hi - lo > cfg.bisection_tol) {
    const double mid = 0.5 * (lo + hi);
    if (outer_ok(mid))
      lo = mid;
    else
      hi = mid;
  }

  if (lo > c1) {
    rep.status = CertStatus::Certified;
    rep.c2 = lo;
  } else {
    rep.status = last_c2_fail.status == BBStatus::ResourceExhausted
                     ? CertStatus::ResourceExhausted
                     : CertStatus::Failed;
    rep.counterexample = as_counterexample(last_c2_fail, last_c2_pred);
  }

  QuadraticBaseline qb = quadratic_baseline(s, lin, cfg);
  rep.rho_quad = qb.certified ? qb.rho : 0.0;
  return rep;
}

std::string report_to_json(const CertificationReport& r) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::string out = "{\n  \"status\": \"";
  out += to_string(r.status);
  out += "\",\n  \"rho_quad\": " + num(r.rho_quad);
  out += ",\n  \"c1\": " + num(r.c1);
  out += ",\n  \"c2\": " + num(r.c2);
  out += ",\n  \"delta\": " + num(r.delta);
  out += ",\n  \"eta\": " + num(r.eta);
  out += ",\n  \"boxes\": {\"bridge\": " + std::to_string(r.boxes_bridge);
  out += ", \"decrease\": " + std::to_string(r.boxes_decrease);
  out += ", \"separation\": " + std::to_string(r.boxes_separation) + "}";
  out += ",\n  \"counterexample\": ";
  if (r.counterexample) {
    out += "{\"point\": [";
    for (std::size_t i = 0; i < r.counterexample->point.size(); ++i) {
      if (i) out += ",";
      out += num(r.counterexample->point[i]);
    }
    out += "], \"predicate\": \"" + r.counterexample->predicate + "\"}";
  } else {
    out += "null";
  }
  out += ",\n  \"wall_time_s\": null\n}\n";
  return out;
}

}  // namespace zubov
