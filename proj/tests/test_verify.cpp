#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <json.hpp>
#include <string>
#include <vector>

#include "example_systems.hpp"
#include "zubov/errors.hpp"
#include "zubov/net.hpp"
#include "zubov/oracle.hpp"
#include "zubov/rng.hpp"
#include "zubov/verify.hpp"

using doctest::Approx;
using zubov::BBResult;
using zubov::BBStatus;
using zubov::Box;
using zubov::CertStatus;
using zubov::Interval;
using zubov::Linearization;
using zubov::MLPParams;
using zubov::PredVerdict;
using zubov::SystemSpec;
using zubov::VerifyConfig;

namespace {

MLPParams surrogate_1d() {
  return zubov::load_checkpoint(std::string(ZUBOV_TEST_DATA_DIR) +
                                "/surrogate_1d.json");
}

MLPParams zero_net(int dim) {
  MLPParams p = zubov::init_mlp({dim, 4, 1}, 1);
  for (auto& w : p.weights) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : p.biases) std::fill(b.begin(), b.end(), 0.0);
  return p;
}

double quad_at(const Eigen::MatrixXd& P, const std::vector<double>& x) {
  Eigen::Map<const Eigen::VectorXd> v(x.data(), (long)x.size());
  return v.dot(P * v);
}

// x' = -x with a quadratic obstacle, on a chosen interval.
SystemSpec contraction_1d(double half_width,
                          const char* obstacle = "x1^2") {
  zubov::SystemInit init;
  init.n = 1;
  init.f.push_back(zubov::Expr::parse("-x1", 1));
  init.obstacles.push_back(zubov::Expr::parse(obstacle, 1));
  init.roi = Box{{Interval{-half_width, half_width}}};
  init.lambda = 1.0;
  init.k = 1;
  init.beta = zubov::BetaFamily{zubov::BetaKind::Exp, 2.0};
  return SystemSpec(std::move(init));
}

}  // namespace

TEST_CASE("branch and bound refutes, subdivides, and stops at limits") {
  VerifyConfig cfg;
  Box unit{{Interval{0.0, 1.0}, Interval{0.0, 1.0}}};

  // Refuted at the root: one box, empty.
  auto never = [](const Box&) { return PredVerdict::Refuted; };
  BBResult r = zubov::branch_and_bound(never, unit, cfg);
  CHECK(r.status == BBStatus::CertifiedEmpty);
  CHECK(r.boxes_processed == 1);
  CHECK(!r.candidate.has_value());

  // A sum-of-squares bound that already excludes the violation set.
  Box far{{Interval{0.5, 1.0}, Interval{0.5, 1.0}}};
  auto small_norm = [](const Box& b) {
    Interval q = sqr(b.dims[0]) + sqr(b.dims[1]);
    return q.lo > 0.01 ? PredVerdict::Refuted : PredVerdict::Unknown;
  };
  r = zubov::branch_and_bound(small_norm, far, cfg);
  CHECK(r.status == BBStatus::CertifiedEmpty);
  CHECK(r.boxes_processed == 1);

  // Unknown everywhere: depth-first dive to the width floor. Each level
  // halves one coordinate of the unit square; both reach 2^-8 <= 5e-3
  // after 16 splits.
  auto opaque = [](const Box&) { return PredVerdict::Unknown; };
  r = zubov::branch_and_bound(opaque, unit, cfg);
  CHECK(r.status == BBStatus::Violated);
  REQUIRE(r.candidate.has_value());
  CHECK(r.candidate->max_width() <= cfg.min_box_width);
  CHECK(r.boxes_processed == 17);
  CHECK(unit.contains(*r.candidate));

  VerifyConfig tiny = cfg;
  tiny.max_boxes = 5;
  r = zubov::branch_and_bound(opaque, unit, tiny);
  CHECK(r.status == BBStatus::ResourceExhausted);
  CHECK(r.boxes_processed == 5);
  CHECK(r.candidate.has_value());

  VerifyConfig bad = cfg;
  bad.min_box_width = 0.0;
  CHECK_THROWS_AS(zubov::branch_and_bound(never, unit, bad),
                  zubov::ConfigError);
}

TEST_CASE("interval refutation finds violations that point sampling misses") {
  // Violation set: a disc of radius 0.05 around (0.3, 0.3).
  VerifyConfig cfg;
  Box root{{Interval{-1.0, 1.0}, Interval{-1.0, 1.0}}};
  auto dist2 = [](const Box& b) {
    return sqr(b.dims[0] - Interval{0.3}) + sqr(b.dims[1] - Interval{0.3});
  };

  auto sound = [&](const Box& b) {
    return dist2(b).lo > 0.0025 ? PredVerdict::Refuted : PredVerdict::Unknown;
  };
  BBResult r = zubov::branch_and_bound(sound, root, cfg);
  CHECK(r.status == BBStatus::Violated);
  REQUIRE(r.candidate.has_value());
  std::vector<double> c = r.candidate->center();
  CHECK(std::fabs(c[0] - 0.3) < 0.06);
  CHECK(std::fabs(c[1] - 0.3) < 0.06);

  // Deterministic replay: identical count and candidate.
  BBResult r2 = zubov::branch_and_bound(sound, root, cfg);
  CHECK(r2.boxes_processed == r.boxes_processed);
  CHECK(r2.candidate->center() == c);

  // The same predicate evaluated only at box centers refutes the root
  // immediately and reports the region empty, even though (0.3, 0.3)
  // itself violates. Enclosures, not samples, are what make Refuted sound.
  auto center_only = [](const Box& b) {
    std::vector<double> m = b.center();
    double d2 = (m[0] - 0.3) * (m[0] - 0.3) + (m[1] - 0.3) * (m[1] - 0.3);
    return d2 > 0.0025 ? PredVerdict::Refuted : PredVerdict::Unknown;
  };
  BBResult wrong = zubov::branch_and_bound(center_only, root, cfg);
  CHECK(wrong.status == BBStatus::CertifiedEmpty);
  double at_witness = 0.0;  // (0.3,0.3) really is in the set it declared empty
  CHECK(at_witness <= 0.0025);
}

TEST_CASE("inner quadratic certificate on hand-checked systems") {
  // 1-D: A = -1, Q = I gives P = 1/2; the Jacobian is constant, so the
  // deviation bound is (numerically) zero and mu = -lambda_max = 1.
  SystemSpec s1 = testsys::test1d();
  Linearization l1 = zubov::make_linearization(s1);
  CHECK(l1.P(0, 0) == Approx(0.5).epsilon(1e-12));
  zubov::InnerQuadratic in = zubov::verify_inner_quadratic(s1, l1, 0.1);
  CHECK(in.certified);
  CHECK(in.deviation_bound <= 1e-9);
  CHECK(in.lambda_max == Approx(-1.0).epsilon(1e-12));
  CHECK(in.p_norm == Approx(0.5).epsilon(1e-12));
  CHECK(in.mu == Approx(1.0).epsilon(1e-6));

  // Reversed Van der Pol at r0 = 0.1. A = [[0,-1],[1,-1]] and Q = I give
  // P = [[1.5,-0.5],[-0.5,1]], |P| = (2.5+sqrt(1.25))/2. The only
  // non-constant Jacobian entries are 1+2*x1*x2 (deviation 0.02) and
  // -(1-x1^2) (deviation 0.01), so C = sqrt(5e-4).
  SystemSpec s2 = testsys::vdp();
  Linearization l2 = zubov::make_linearization(s2);
  CHECK(l2.P(0, 0) == Approx(1.5).epsilon(1e-9));
  CHECK(l2.P(0, 1) == Approx(-0.5).epsilon(1e-9));
  CHECK(l2.P(1, 1) == Approx(1.0).epsilon(1e-9));
  in = zubov::verify_inner_quadratic(s2, l2, 0.1);
  CHECK(in.certified);
  CHECK(in.lambda_max == Approx(-1.0).epsilon(1e-9));
  CHECK(in.p_norm == Approx(1.8090170).epsilon(1e-6));
  CHECK(in.deviation_bound > 0.0223);
  CHECK(in.deviation_bound < 0.0225);
  CHECK(in.mu == Approx(1.0 - 2.0 * 1.8090170 * std::sqrt(5e-4)).epsilon(1e-3));

  // At r0 = 2 the cubic term dominates: C ~ sqrt(80) and the margin flips.
  in = zubov::verify_inner_quadratic(s2, l2, 2.0);
  CHECK(!in.certified);
  CHECK(in.deviation_bound > 8.9);
  CHECK(!in.failure.empty());
  CHECK(in.mu == 0.0);

  // A kink inside the ball: no interval Jacobian, certificate refused.
  zubov::SystemInit ki;
  ki.n = 1;
  ki.f.push_back(zubov::Expr::parse("-x1 - max(x1, -x1)", 1));
  ki.roi = Box{{Interval{-1.0, 1.0}}};
  ki.lambda = 1.0;
  ki.beta = zubov::BetaFamily{zubov::BetaKind::Exp, 2.0};
  SystemSpec kinked(std::move(ki));
  Linearization manual{Eigen::MatrixXd::Constant(1, 1, -1.0),
                       Eigen::MatrixXd::Constant(1, 1, 0.5),
                       Eigen::MatrixXd::Identity(1, 1)};
  in = zubov::verify_inner_quadratic(kinked, manual, 0.1);
  CHECK(!in.certified);
  CHECK(in.failure.find("Jacobian") != std::string::npos);

  CHECK_THROWS_AS(zubov::verify_inner_quadratic(s1, l1, 0.0),
                  zubov::ConfigError);
}

TEST_CASE("bridge check against the fitted one-dimensional net") {
  SystemSpec s = testsys::test1d();
  Linearization lin = zubov::make_linearization(s);
  MLPParams net = surrogate_1d();  // W(x) ~ x^2 to 6e-5
  VerifyConfig cfg;
  cfg.min_box_width = 5e-4;  // net enclosures must outresolve the margins
  const double rho = 0.01 * 0.5;  // r0^2 * lambda_min(P) at r0 = 0.1

  // {W <= 0.005} ~ {|x| <= 0.071} sits well inside {x^2/2 < 0.005}.
  BBResult r = zubov::verify_bridge(net, s, lin, 0.005, rho, cfg);
  CHECK(r.status == BBStatus::CertifiedEmpty);
  CHECK(r.boxes_processed > 0);

  // {W <= 0.5} ~ {|x| <= 0.71} pokes far outside it.
  r = zubov::verify_bridge(net, s, lin, 0.5, rho, cfg);
  CHECK(r.status == BBStatus::Violated);
  REQUIRE(r.candidate.has_value());
  std::vector<double> c = r.candidate->center();
  CHECK(zubov::forward(net, c) <= 0.5 + 0.05);
  CHECK(quad_at(lin.P, c) >= rho - 0.01);

  // The zero net puts all of Omega below any positive level.
  r = zubov::verify_bridge(zero_net(1), s, lin, 0.1, rho, cfg);
  CHECK(r.status == BBStatus::Violated);
}

TEST_CASE("decrease check on the level annulus") {
  SystemSpec s = testsys::test1d();
  MLPParams net = surrogate_1d();
  VerifyConfig cfg;
  cfg.min_box_width = 5e-4;

  // grad W . f ~ -2x^2 <= -0.01 on {W >= 0.005}: comfortably certified.
  BBResult r = zubov::verify_decrease(net, s, 0.005, 0.8, cfg);
  CHECK(r.status == BBStatus::CertifiedEmpty);
  CHECK(r.boxes_processed > 0);

  // An unattainable margin: |grad W . f| <= 2 on the interval.
  VerifyConfig steep = cfg;
  steep.decrease_margin = 3.0;
  r = zubov::verify_decrease(net, s, 0.005, 0.8, steep);
  CHECK(r.status == BBStatus::Violated);
  REQUIRE(r.candidate.has_value());
  double w = zubov::forward(net, r.candidate->center());
  CHECK(w >= 0.005 - 0.05);
  CHECK(w <= 0.8 + 0.05);

  // Empty annulus is vacuously certified without processing anything.
  r = zubov::verify_decrease(net, s, 0.3, 0.3, cfg);
  CHECK(r.status == BBStatus::CertifiedEmpty);
  CHECK(r.boxes_processed == 0);
}

TEST_CASE("separation from the unsafe margin and the ROI shell") {
  SystemSpec s = testsys::test1d();
  MLPParams net = surrogate_1d();
  VerifyConfig cfg;

  // h = x^2 >= 0.999 only where W ~ x^2 > 0.8, and the outer shells
  // [0.98, 1] carry W ~ 0.96 > 0.8.
  BBResult r = zubov::verify_separation(net, s, 0.8, cfg);
  CHECK(r.status == BBStatus::CertifiedEmpty);
  CHECK(r.boxes_processed >= 3);  // obstacle run plus one per shell

  // At c2 = 0.999 the sublevel set reaches into the unsafe margin.
  r = zubov::verify_separation(net, s, 0.999, cfg);
  CHECK(r.status == BBStatus::Violated);
  CHECK(r.candidate.has_value());

  // Without obstacles the unsafe-margin run refutes at the root and only
  // the shell slabs remain.
  zubov::SystemInit si;
  si.n = 1;
  si.f.push_back(zubov::Expr::parse("-x1", 1));
  si.roi = Box{{Interval{-1.0, 1.0}}};
  si.lambda = 1.0;
  si.beta = zubov::BetaFamily{zubov::BetaKind::Exp, 2.0};
  SystemSpec open_system(std::move(si));
  r = zubov::verify_separation(net, open_system, 0.8, cfg);
  CHECK(r.status == BBStatus::CertifiedEmpty);
}

TEST_CASE("level bisection certifies the fitted net end to end") {
  SystemSpec s = testsys::test1d();
  Linearization lin = zubov::make_linearization(s);
  MLPParams net = surrogate_1d();
  VerifyConfig cfg;
  cfg.min_box_width = 5e-4;

  zubov::CertificationReport rep = zubov::bisect_levels(net, s, lin, cfg);
  REQUIRE(rep.status == CertStatus::Certified);
  CHECK(rep.c1 > 0.004);
  CHECK(rep.c1 < 0.0105);  // exact inclusion bound is c1 = 0.01
  CHECK(rep.c2 > 0.7);
  CHECK(rep.c2 < 1.0);
  CHECK(rep.c1 < rep.c2);
  CHECK(rep.delta == cfg.decrease_margin);
  CHECK(rep.eta == zubov::interval_slack());
  CHECK(rep.boxes_bridge > 0);
  CHECK(rep.boxes_decrease > 0);
  CHECK(rep.boxes_separation > 0);
  CHECK(!rep.counterexample.has_value());
  // Baseline level is pinned by the ROI shell at |x| = 0.998: rho ~ 0.498.
  CHECK(rep.rho_quad > 0.49);
  CHECK(rep.rho_quad < 0.4986);

  // Any level below the certified c2 passes the same checks.
  for (double c : {0.3, 0.7 * rep.c2}) {
    CHECK(zubov::verify_decrease(net, s, rep.c1, c, cfg).status ==
          BBStatus::CertifiedEmpty);
    CHECK(zubov::verify_separation(net, s, c, cfg).status ==
          BBStatus::CertifiedEmpty);
  }

  // Identical reruns, including box counts, via the serialized report.
  zubov::CertificationReport again = zubov::bisect_levels(net, s, lin, cfg);
  CHECK(zubov::report_to_json(again) == zubov::report_to_json(rep));

  // Trajectory audit of the certified region: from W(x0) <= c2 the
  // original flow must reach the convergence ball without touching an
  // obstacle. The oracle guards both.
  zubov::Oracle oracle(s);
  zubov::Rng rng(99);
  int audited = 0;
  for (int i = 0; i < 200 && audited < 30; ++i) {
    std::vector<double> x0 = s.roi().sample(rng);
    if (zubov::forward(net, x0) > rep.c2) continue;
    ++audited;
    zubov::IntegrationResult res = oracle.simulate_original(x0, 200.0);
    CHECK(res.status == zubov::OracleStatus::Converged);
  }
  CHECK(audited >= 20);

  // The zero net fails at the first bridge level and names the predicate.
  rep = zubov::bisect_levels(zero_net(1), s, lin, cfg);
  CHECK(rep.status == CertStatus::Failed);
  REQUIRE(rep.counterexample.has_value());
  CHECK(rep.counterexample->predicate.find("bridge") != std::string::npos);
  CHECK(rep.counterexample->point.size() == 1);
}

TEST_CASE("quadratic baseline level search") {
  // On [-2, 2] the binding constraint is the unsafe margin h = x^2 >= 0.999
  // at |x| ~ 0.9995, where x^2/2 ~ 0.49975.
  SystemSpec s = contraction_1d(2.0);
  Linearization lin = zubov::make_linearization(s);
  VerifyConfig cfg;
  zubov::QuadraticBaseline qb = zubov::quadratic_baseline(s, lin, cfg);
  CHECK(qb.certified);
  CHECK(qb.rho > 0.48);
  CHECK(qb.rho < 0.497);
  CHECK(qb.boxes > 0);

  // Van der Pol with both obstacles: some positive level certifies, below
  // the quadratic value at the obstacle centers.
  SystemSpec vdp = testsys::vdp();
  Linearization lv = zubov::make_linearization(vdp);
  VerifyConfig coarse = cfg;
  coarse.min_box_width = 0.01;
  coarse.bisection_tol = 5e-3;
  zubov::QuadraticBaseline qv = zubov::quadratic_baseline(vdp, lv, coarse);
  CHECK(qv.certified);
  CHECK(qv.rho > 0.0);
  CHECK(qv.rho < quad_at(lv.P, {1.0, 1.0}));

  // Sampled soundness of the certified ellipse: safe, and decreasing
  // outside the inner ball.
  zubov::Rng rng(7);
  int inside = 0;
  for (int i = 0; i < 3000; ++i) {
    std::vector<double> x = vdp.roi().sample(rng);
    if (quad_at(lv.P, x) > qv.rho) continue;
    ++inside;
    CHECK(vdp.h_max(x) < 1.0);
    if (std::fabs(x[0]) >= coarse.inner_radius ||
        std::fabs(x[1]) >= coarse.inner_radius) {
      std::vector<double> f = vdp.field(x);
      Eigen::Map<const Eigen::VectorXd> xv(x.data(), 2);
      Eigen::Map<const Eigen::VectorXd> fv(f.data(), 2);
      CHECK(2.0 * xv.dot(lv.P * fv) < 0.0);
    }
  }
  CHECK(inside > 50);

  // Inner certificate failure is reported, not papered over.
  VerifyConfig wide = cfg;
  wide.inner_radius = 2.0;
  qv = zubov::quadratic_baseline(vdp, lv, wide);
  CHECK(!qv.certified);
  CHECK(qv.failure.find("inner") != std::string::npos);

  // An obstacle already inside the clearance at the origin: no level works.
  SystemSpec hugging = contraction_1d(1.0, "0.9995 + 0.0001*x1^2");
  Linearization lh = zubov::make_linearization(hugging);
  zubov::QuadraticBaseline qh = zubov::quadratic_baseline(hugging, lh, cfg);
  CHECK(!qh.certified);
  CHECK(qh.rho == 0.0);
  CHECK(!qh.failure.empty());
}

TEST_CASE("certification report serializes to the documented schema") {
  zubov::CertificationReport rep;
  rep.status = CertStatus::Certified;
  rep.rho_quad = 0.25;
  rep.c1 = 0.01;
  rep.c2 = 0.9;
  rep.delta = 1e-4;
  rep.eta = 1e-12;
  rep.boxes_bridge = 10;
  rep.boxes_decrease = 20;
  rep.boxes_separation = 30;

  nlohmann::json j = nlohmann::json::parse(zubov::report_to_json(rep));
  CHECK(j["status"] == "Certified");
  CHECK(j["rho_quad"].get<double>() == 0.25);
  CHECK(j["c1"].get<double>() == 0.01);
  CHECK(j["c2"].get<double>() == 0.9);
  CHECK(j["delta"].get<double>() == 1e-4);
  CHECK(j["eta"].get<double>() == 1e-12);
  CHECK(j["boxes"]["bridge"].get<long>() == 10);
  CHECK(j["boxes"]["decrease"].get<long>() == 20);
  CHECK(j["boxes"]["separation"].get<long>() == 30);
  CHECK(j["counterexample"].is_null());
  CHECK(j["wall_time_s"].is_null());

  rep.status = CertStatus::Failed;
  rep.counterexample = zubov::Counterexample{{0.25, -0.5}, "decrease"};
  j = nlohmann::json::parse(zubov::report_to_json(rep));
  CHECK(j["status"] == "Failed");
  CHECK(j["counterexample"]["point"].size() == 2);
  CHECK(j["counterexample"]["point"][1].get<double>() == -0.5);
  CHECK(j["counterexample"]["predicate"] == "decrease");

  CHECK(std::string(zubov::to_string(CertStatus::ResourceExhausted)) ==
        "ResourceExhausted");
}
