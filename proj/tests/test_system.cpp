#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "example_systems.hpp"
#include "zubov/errors.hpp"
#include "zubov/rng.hpp"
#include "zubov/system.hpp"

using zubov::Box;
using zubov::ConfigError;
using zubov::Expr;
using zubov::Interval;
using zubov::Rng;
using zubov::SystemInit;
using zubov::SystemSpec;

namespace {

SystemInit minimal_1d() {
  SystemInit init;
  init.n = 1;
  init.f.push_back(Expr::parse("-x1", 1));
  init.roi = Box{{Interval{-1.0, 1.0}}};
  init.lambda = 1.0;
  return init;
}

}  // namespace

TEST_CASE("construction validates the model") {
  CHECK_NOTHROW(SystemSpec{minimal_1d()});

  SystemInit bad = minimal_1d();
  bad.lambda = 0.0;
  CHECK_THROWS_AS(SystemSpec(std::move(bad)), ConfigError);

  bad = minimal_1d();
  bad.k = 0;
  CHECK_THROWS_AS(SystemSpec(std::move(bad)), ConfigError);

  bad = minimal_1d();
  bad.beta.alpha = -1.0;
  CHECK_THROWS_AS(SystemSpec(std::move(bad)), ConfigError);

  bad = minimal_1d();
  bad.f.clear();
  bad.f.push_back(Expr::parse("1 - x1", 1));  // f(0) != 0
  CHECK_THROWS_AS(SystemSpec(std::move(bad)), ConfigError);

  bad = minimal_1d();
  bad.roi = Box{{Interval{0.5, 1.0}}};  // origin outside
  CHECK_THROWS_AS(SystemSpec(std::move(bad)), ConfigError);

  bad = minimal_1d();
  bad.obstacles.push_back(Expr::parse("2 - x1^2", 1));  // h(0) = 2 >= 1
  CHECK_THROWS_AS(SystemSpec(std::move(bad)), ConfigError);

  bad = minimal_1d();
  bad.f.push_back(Expr::parse("-x1", 1));  // two components, n = 1
  CHECK_THROWS_AS(SystemSpec(std::move(bad)), ConfigError);
}

TEST_CASE("obstacle aggregation and safety indicator") {
  SystemSpec s = testsys::vdp();
  std::vector<double> x{0.5, 0.5};
  CHECK(s.h_max(x) == doctest::Approx(-0.75).epsilon(1e-14));
  CHECK(s.gamma(x) == doctest::Approx(1.75).epsilon(1e-14));

  std::vector<double> center{1.0, 1.0};
  CHECK(s.h_max(center) == doctest::Approx(1.25).epsilon(1e-14));

  CHECK(s.omega(x) == doctest::Approx(0.5 / 0.175).epsilon(1e-12));
  std::vector<double> zero{0.0, 0.0};
  CHECK(s.omega(zero) == 0.0);
  CHECK(s.gamma0() == doctest::Approx(7.75).epsilon(1e-14));
  CHECK_THROWS_AS(s.omega(center), zubov::UnsafePointError);

  SystemSpec s1 = testsys::vdp(1);
  CHECK(s1.h_max(x) == doctest::Approx(-0.75).epsilon(1e-14));

  SystemSpec none(minimal_1d());
  std::vector<double> p{0.5};
  CHECK(none.h_max(p) <= -1e299);
  CHECK(none.gamma(p) == 1.0);
  CHECK(none.omega(p) == doctest::Approx(0.25).epsilon(1e-14));

  SystemSpec prod = testsys::vdp(2, zubov::GammaAggregation::Product);
  CHECK(prod.gamma(x) == doctest::Approx(1.75 * 17.75).epsilon(1e-12));
}

TEST_CASE("omega grows unboundedly toward the obstacle boundary") {
  SystemSpec s = testsys::vdp();
  // Obstacle 1 boundary along the +x1 ray from its center (1,1) is at
  // distance 0.25; approach it from outside.
  for (double d : {1e-1, 1e-2, 1e-3}) {
    std::vector<double> x{1.0 + 0.25 + d, 1.0};
    CHECK(s.omega(x) * d >= 10.0);
  }
}

TEST_CASE("scaled field values") {
  SystemSpec s = testsys::vdp();
  std::vector<double> x{0.5, 0.5};
  auto ft = s.scaled_field(x);
  CHECK(ft[0] == doctest::Approx(-0.0875).epsilon(1e-14));
  CHECK(ft[1] == doctest::Approx(0.021875).epsilon(1e-14));

  SystemSpec one = testsys::test1d();
  std::vector<double> p{0.5};
  CHECK(one.scaled_field(p)[0] == doctest::Approx(-0.375).epsilon(1e-14));

  std::vector<double> zero{0.0, 0.0};
  auto f0 = s.scaled_field(zero);
  CHECK(f0[0] == 0.0);
  CHECK(f0[1] == 0.0);
}

TEST_CASE("scaled field equals lambda gamma^k f componentwise") {
  SystemSpec s = testsys::vdp();
  Rng rng(11);
  std::vector<double> x(2), fx(2), fs(2);
  int done = 0;
  while (done < 1000) {
    x[0] = rng.uniform(-2.5, 2.5);
    x[1] = rng.uniform(-3.5, 3.5);
    s.field(x, fx);
    s.scaled_field(x, fs);
    double factor = s.lambda() * s.gamma(x);
    for (int i = 0; i < 2; ++i) {
      auto iu = static_cast<std::size_t>(i);
      CHECK(fs[iu] == doctest::Approx(factor * fx[iu]).epsilon(1e-13));
    }
    ++done;
  }
}

TEST_CASE("scaling preserves the sign of directional derivatives on safe points") {
  SystemSpec s = testsys::vdp();
  Rng rng(23);
  std::vector<double> x(2), g(2), fx(2), fs(2);
  int done = 0;
  while (done < 500) {
    x[0] = rng.uniform(-2.5, 2.5);
    x[1] = rng.uniform(-3.5, 3.5);
    if (!(s.gamma(x) > 0.0)) continue;
    g[0] = rng.uniform(-1.0, 1.0);
    g[1] = rng.uniform(-1.0, 1.0);
    s.field(x, fx);
    s.scaled_field(x, fs);
    double dot_f = g[0] * fx[0] + g[1] * fx[1];
    double dot_fs = g[0] * fs[0] + g[1] * fs[1];
    if (std::fabs(dot_f) < 1e-12) continue;
    CHECK(dot_f * dot_fs > 0.0);
    ++done;
  }
}

TEST_CASE("jacobian at origin") {
  Eigen::MatrixXd A = testsys::vdp().jacobian_at_origin();
  CHECK(A(0, 0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(A(0, 1) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(A(1, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(A(1, 1) == doctest::Approx(-1.0).epsilon(1e-14));

  Eigen::MatrixXd Ap = testsys::power_plain().jacobian_at_origin();
  CHECK(Ap(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(Ap(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(Ap(1, 0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(Ap(1, 1) == doctest::Approx(-0.5).epsilon(1e-12));

  Eigen::MatrixXd A1 = testsys::test1d().jacobian_at_origin();
  CHECK(A1(0, 0) == doctest::Approx(-1.0).epsilon(1e-14));

  // Scaled variant: lambda gamma(0)^k A with gamma(0) = 7.75, lambda = 0.1.
  Eigen::MatrixXd As = testsys::vdp().scaled_jacobian_at_origin();
  CHECK((As - 0.775 * A).norm() <= 1e-12);

  SystemInit notdiff = minimal_1d();
  notdiff.f.clear();
  notdiff.f.push_back(Expr::parse("min(x1, 2*x1)", 1));
  SystemSpec nd(std::move(notdiff));
  CHECK_THROWS_AS(nd.jacobian_at_origin(), zubov::NonDifferentiableError);
}

TEST_CASE("lyapunov solve reproduces hand solutions") {
  Eigen::MatrixXd A(2, 2);
  A << 0.0, -1.0, 1.0, -1.0;
  Eigen::MatrixXd P = zubov::solve_lyapunov(A, Eigen::MatrixXd::Identity(2, 2));
  CHECK(P(0, 0) == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(P(0, 1) == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(P(1, 0) == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(P(1, 1) == doctest::Approx(1.0).epsilon(1e-9));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
  CHECK(es.eigenvalues()(0) == doctest::Approx(0.690983).epsilon(1e-4));
  CHECK(es.eigenvalues()(1) == doctest::Approx(1.809017).epsilon(1e-4));

  Eigen::MatrixXd mI = -Eigen::MatrixXd::Identity(3, 3);
  Eigen::MatrixXd Pd = zubov::solve_lyapunov(mI, Eigen::MatrixXd::Identity(3, 3));
  CHECK((Pd - 0.5 * Eigen::MatrixXd::Identity(3, 3)).norm() <= 1e-12);

  Eigen::MatrixXd Ap(2, 2);
  Ap << 0.0, 1.0, -0.5, -0.5;
  Eigen::MatrixXd Pp = zubov::solve_lyapunov(Ap, Eigen::MatrixXd::Identity(2, 2));
  CHECK((Ap.transpose() * Pp + Pp * Ap + Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-9);
  CHECK(Pp(0, 1) == doctest::Approx(Pp(1, 0)).epsilon(1e-14));
}

TEST_CASE("lyapunov solve rejects non-hurwitz and bad inputs") {
  Eigen::MatrixXd unstable(1, 1);
  unstable << 1.0;
  CHECK_THROWS_AS(zubov::solve_lyapunov(unstable, Eigen::MatrixXd::Identity(1, 1)),
                  zubov::NotHurwitzError);

  Eigen::MatrixXd marginal(2, 2);
  marginal << 0.0, 1.0, -1.0, 0.0;  // purely imaginary spectrum
  CHECK_THROWS_AS(zubov::solve_lyapunov(marginal, Eigen::MatrixXd::Identity(2, 2)),
                  zubov::NotHurwitzError);

  Eigen::MatrixXd A(2, 2);
  A << -1.0, 0.0, 0.0, -1.0;
  Eigen::MatrixXd notsym(2, 2);
  notsym << 1.0, 0.5, -0.5, 1.0;
  CHECK_THROWS_AS(zubov::solve_lyapunov(A, notsym), ConfigError);
  Eigen::MatrixXd notpd(2, 2);
  notpd << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(zubov::solve_lyapunov(A, notpd), ConfigError);
}

TEST_CASE("lyapunov solve handles random stable systems") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    int n = rng.uniform_int(2, 4);
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) M(i, j) = rng.uniform(-1.0, 1.0);
    Eigen::MatrixXd A = -M * M.transpose() - 0.1 * Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd P = zubov::solve_lyapunov(A, Eigen::MatrixXd::Identity(n, n));
    CHECK((A.transpose() * P + P * A + Eigen::MatrixXd::Identity(n, n)).norm() <= 1e-9);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("interval jacobian encloses the true jacobian") {
  SystemSpec one = testsys::test1d();
  auto J1 = one.interval_jacobian(Box{{Interval{-0.7, 0.9}}});
  CHECK(J1[0][0].contains(-1.0));
  CHECK(J1[0][0].width() <= 1e-9);

  SystemSpec s = testsys::vdp();
  Box nb{{Interval{-0.1, 0.1}, Interval{-0.1, 0.1}}};
  auto J = s.interval_jacobian(nb);
  CHECK(J[1][0].lo >= 0.97);
  CHECK(J[1][0].hi <= 1.03);

  // Hand Jacobian of the reversed VdP: [[0,-1],[1+2 x1 x2, -(1-x1^2)]].
  Rng rng(31);
  Box wide{{Interval{-1.5, 2.0}, Interval{-2.0, 1.0}}};
  auto Jw = s.interval_jacobian(wide);
  std::vector<double> x(2);
  for (int i = 0; i < 100; ++i) {
    x = wide.sample(rng);
    CHECK(Jw[0][0].contains(0.0));
    CHECK(Jw[0][1].contains(-1.0));
    CHECK(Jw[1][0].contains(1.0 + 2.0 * x[0] * x[1]));
    CHECK(Jw[1][1].contains(-(1.0 - x[0] * x[0])));
  }
}

TEST_CASE("interval obstacle and gamma enclosures") {
  SystemSpec s = testsys::vdp();
  Box nb{{Interval{0.9, 1.1}, Interval{0.9, 1.1}}};
  Interval h = s.h_max(nb);
  CHECK(h.contains(1.25));
  CHECK(h.lo >= 1.09);
  Interval g = s.gamma(nb);
  CHECK(g.hi <= 1.0 - 1.09 + 1e-9);
  CHECK(g.contains(-0.25));

  SystemSpec none(minimal_1d());
  Interval gn = none.gamma(Box{{Interval{-0.5, 0.5}}});
  CHECK(gn.lo == 1.0);
  CHECK(gn.hi == 1.0);
}

TEST_CASE("linearization bundle") {
  zubov::Linearization lin = zubov::make_linearization(testsys::vdp());
  CHECK((lin.A.transpose() * lin.P + lin.P * lin.A + lin.Q).norm() <= 1e-9);
  CHECK(lin.P(0, 0) == doctest::Approx(1.5).epsilon(1e-9));

  // Scaling A scales P inversely: solve(cA, I) = solve(A, I)/c.
  Eigen::MatrixXd Ps = zubov::solve_lyapunov(0.775 * lin.A, lin.Q);
  CHECK((Ps - lin.P / 0.775).norm() <= 1e-9);
}
