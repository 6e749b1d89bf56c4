#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "example_systems.hpp"
#include "zubov/errors.hpp"
#include "zubov/net.hpp"
#include "zubov/oracle.hpp"
#include "zubov/train.hpp"
#include "zubov/transform.hpp"

using zubov::ConfigError;
using zubov::Dataset;
using zubov::MLPParams;
using zubov::Rng;
using zubov::SystemSpec;
using zubov::TrainBatch;
using zubov::TrainConfig;

namespace {

Dataset grid_dataset_1d(const SystemSpec& s, int count) {
  zubov::DatasetOptions opts;
  opts.count = count;
  opts.strategy = zubov::SampleStrategy::Grid;
  return zubov::generate_dataset(s, {}, opts);
}

double net_value(const MLPParams& p, double x) {
  return zubov::forward(p, std::vector<double>{x});
}

}  // namespace

TEST_CASE("boundary sampling follows face areas and pins a coordinate") {
  SystemSpec s = testsys::vdp();
  TrainConfig cfg;
  cfg.n_collocation = 200;
  cfg.n_boundary = 24000;
  cfg.c_data = 0;
  Rng rng(5);
  TrainBatch b = zubov::sample_batch(s, cfg, rng);

  REQUIRE(b.boundary_count() == 24000);
  int hits[4] = {0, 0, 0, 0};  // x1=lo, x1=hi, x2=lo, x2=hi
  for (int i = 0; i < b.boundary_count(); ++i) {
    double x1 = b.boundary[2 * (size_t)i], x2 = b.boundary[2 * (size_t)i + 1];
    bool p1l = x1 == -2.5, p1h = x1 == 2.5, p2l = x2 == -3.5, p2h = x2 == 3.5;
    CHECK((p1l || p1h || p2l || p2h));
    CHECK(x1 >= -2.5);
    CHECK(x1 <= 2.5);
    CHECK(x2 >= -3.5);
    CHECK(x2 <= 3.5);
    hits[0] += p1l;
    hits[1] += p1h;
    hits[2] += p2l;
    hits[3] += p2h;
  }
  // Long faces have width 7, short ones 5; probabilities {7,7,5,5}/24.
  CHECK(std::abs(hits[0] - 7000) < 350);
  CHECK(std::abs(hits[1] - 7000) < 350);
  CHECK(std::abs(hits[2] - 5000) < 350);
  CHECK(std::abs(hits[3] - 5000) < 350);

  for (int i = 0; i < b.collocation_count(); ++i) {
    CHECK(s.roi().contains(std::span<const double>(
        b.collocation.data() + 2 * (size_t)i, 2)));
    // Cached values match direct evaluation.
    std::vector<double> x{b.collocation[2 * (size_t)i], b.collocation[2 * (size_t)i + 1]};
    std::vector<double> ft = s.scaled_field(x);
    CHECK(b.colloc_field[2 * (size_t)i] == ft[0]);
    CHECK(b.colloc_field[2 * (size_t)i + 1] == ft[1]);
    CHECK(b.colloc_norm2[(size_t)i] == x[0] * x[0] + x[1] * x[1]);
  }

  Rng rng2(5);
  TrainBatch b2 = zubov::sample_batch(s, cfg, rng2);
  CHECK(b2.boundary == b.boundary);
  CHECK(b2.collocation == b.collocation);

  // In one dimension the two faces are the interval endpoints.
  SystemSpec s1 = testsys::test1d();
  TrainConfig c1;
  c1.n_boundary = 50;
  c1.c_data = 0;
  Rng r1(9);
  TrainBatch b1 = zubov::sample_batch(s1, c1, r1);
  bool lo = false, hi = false;
  for (int i = 0; i < b1.boundary_count(); ++i) {
    CHECK((b1.boundary[(size_t)i] == -1.0 || b1.boundary[(size_t)i] == 1.0));
    lo = lo || b1.boundary[(size_t)i] == -1.0;
    hi = hi || b1.boundary[(size_t)i] == 1.0;
  }
  CHECK(lo);
  CHECK(hi);
}

TEST_CASE("data points are drawn from the dataset without replacement") {
  SystemSpec s = testsys::test1d();
  Dataset d = grid_dataset_1d(s, 101);
  REQUIRE(d.labels.size() == 101);

  TrainConfig cfg;
  cfg.n_data = 50;
  Rng rng(3);
  TrainBatch b = zubov::sample_batch(s, cfg, rng, &d);
  REQUIRE(b.data_count() == 50);
  std::set<double> seen;
  for (int i = 0; i < 50; ++i) {
    double x = b.data_points[(size_t)i];
    seen.insert(x);
    CHECK(std::fabs(b.data_labels[(size_t)i] - x * x) <= 1e-3);
  }
  CHECK(seen.size() == 50);

  cfg.n_data = 500;
  Rng rng2(3);
  TrainBatch all = zubov::sample_batch(s, cfg, rng2, &d);
  CHECK(all.data_count() == 101);

  Rng rng3(3);
  CHECK_THROWS_AS(zubov::sample_batch(s, cfg, rng3), ConfigError);
}

TEST_CASE("loss components") {
  SystemSpec s = testsys::test1d();
  Dataset d = grid_dataset_1d(s, 101);
  TrainConfig cfg;
  cfg.n_collocation = 40;
  cfg.n_boundary = 10;
  cfg.n_data = 30;
  Rng rng(7);
  TrainBatch b = zubov::sample_batch(s, cfg, rng, &d);
  MLPParams p = zubov::init_mlp({1, 6, 6, 1}, 42);

  SUBCASE("zero weights give zero loss") {
    TrainConfig z = cfg;
    z.c_res = z.c_bc = z.c_zero = z.c_data = 0;
    zubov::LossParts l = zubov::pinn_loss(p, b, z, s);
    CHECK(l.total == 0.0);
    CHECK(l.res == 0.0);
    CHECK(l.bc == 0.0);
    CHECK(l.zero == 0.0);
    CHECK(l.data == 0.0);
  }

  SUBCASE("data term vanishes when labels equal the net") {
    TrainBatch fit;
    fit.dim = 1;
    for (double x : {-0.8, -0.2, 0.3, 0.9}) {
      fit.data_points.push_back(x);
      fit.data_labels.push_back(net_value(p, x));
    }
    TrainConfig z;
    z.c_res = z.c_bc = z.c_zero = 0;
    zubov::LossParts l = zubov::pinn_loss(p, fit, z, s);
    CHECK(l.data == 0.0);
    CHECK(l.total == 0.0);
  }

  SUBCASE("components are nonnegative and compose the total") {
    TrainConfig w = cfg;
    w.c_res = 0.7;
    w.c_bc = 2.0;
    w.c_zero = 0.5;
    w.c_data = 1.3;
    zubov::LossParts l = zubov::pinn_loss(p, b, w, s);
    CHECK(l.res >= 0.0);
    CHECK(l.bc >= 0.0);
    CHECK(l.zero >= 0.0);
    CHECK(l.data >= 0.0);
    CHECK(l.total == doctest::Approx(0.7 * l.res + 2.0 * l.bc + 0.5 * l.zero +
                                     1.3 * l.data)
                         .epsilon(1e-15));
  }
}

TEST_CASE("exact-solution surrogate has a tiny loss") {
  SystemSpec s = testsys::test1d();
  MLPParams p = zubov::load_checkpoint(std::string(ZUBOV_TEST_DATA_DIR) +
                                       "/surrogate_1d.json");

  double emax = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    double x = -1.0 + i / 1000.0;
    emax = std::max(emax, std::fabs(net_value(p, x) - x * x));
  }
  CHECK(emax <= 1e-4);

  Dataset d = grid_dataset_1d(s, 1001);
  TrainConfig cfg;  // default weights, all four terms active
  cfg.n_data = 1001;
  Rng rng(1);
  TrainBatch b = zubov::sample_batch(s, cfg, rng, &d);
  zubov::LossParts l = zubov::pinn_loss(p, b, cfg, s);
  CHECK(l.total <= 1e-5);
}

TEST_CASE("composite loss gradient matches finite differences") {
  struct Case {
    SystemSpec s;
    std::vector<int> widths;
  };
  Case cases[] = {{testsys::test1d(), {1, 8, 8, 1}}, {testsys::vdp(), {2, 6, 6, 1}}};
  for (auto& c : cases) {
    zubov::DatasetOptions dop;
    dop.count = c.s.dim() == 1 ? 61 : 60;
    dop.strategy = c.s.dim() == 1 ? zubov::SampleStrategy::Grid
                                  : zubov::SampleStrategy::UniformRoi;
    Dataset d = zubov::generate_dataset(c.s, {}, dop);

    TrainConfig cfg;
    cfg.n_collocation = 20;
    cfg.n_boundary = 8;
    cfg.n_data = 10;
    cfg.c_res = 1.1;
    cfg.c_bc = 0.9;
    cfg.c_zero = 1.2;
    cfg.c_data = 0.8;
    Rng rng(11);
    TrainBatch b = zubov::sample_batch(c.s, cfg, rng, &d);

    MLPParams p = zubov::init_mlp(c.widths, 77);
    // Nonzero biases so tanh curvature terms are exercised.
    Rng brng(13);
    for (auto& bias : p.biases)
      for (double& v : bias) v = brng.uniform(-0.3, 0.3);

    const int np = zubov::param_count(p);
    std::vector<double> grad((size_t)np);
    zubov::loss_param_gradient(p, b, cfg, c.s, grad);

    std::vector<double> flat((size_t)np);
    zubov::flatten(p, flat);
    Rng probe(17);
    const double h = 1e-5;
    for (int t = 0; t < 25; ++t) {
      int i = probe.uniform_int(0, np - 1);
      MLPParams q = p;
      std::vector<double> fp = flat;
      fp[(size_t)i] = flat[(size_t)i] + h;
      zubov::unflatten(q, fp);
      double lp = zubov::pinn_loss(q, b, cfg, c.s).total;
      fp[(size_t)i] = flat[(size_t)i] - h;
      zubov::unflatten(q, fp);
      double lm = zubov::pinn_loss(q, b, cfg, c.s).total;
      double fd = (lp - lm) / (2 * h);
      CHECK(std::fabs(grad[(size_t)i] - fd) <=
            1e-5 * (1.0 + std::fabs(grad[(size_t)i])));
    }
  }
}

TEST_CASE("training is deterministic and validates its config") {
  SystemSpec s = testsys::test1d();
  Dataset d = grid_dataset_1d(s, 101);
  TrainConfig cfg;
  cfg.n_collocation = 60;
  cfg.n_boundary = 12;
  cfg.n_data = 50;
  cfg.epochs = 60;
  cfg.resample_every = 25;
  cfg.seed = 99;
  MLPParams p0 = zubov::init_mlp({1, 8, 8, 1}, 5);

  SUBCASE("zero epochs is the identity") {
    TrainConfig z = cfg;
    z.epochs = 0;
    zubov::TrainResult r = zubov::train(p0, s, z, d);
    CHECK(r.history.empty());
    for (int l = 0; l < p0.layer_count(); ++l)
      for (size_t i = 0; i < p0.weights[(size_t)l].size(); ++i)
        CHECK(r.params.weights[(size_t)l][i] == p0.weights[(size_t)l][i]);
  }

  SUBCASE("bitwise reproducible, independent of thread count") {
    zubov::TrainResult a = zubov::train(p0, s, cfg, d);
    zubov::TrainResult b = zubov::train(p0, s, cfg, d);
    TrainConfig threaded = cfg;
    threaded.threads = 3;
    zubov::TrainResult c = zubov::train(p0, s, threaded, d);
    REQUIRE(a.history.size() == 60);
    for (int l = 0; l < a.params.layer_count(); ++l) {
      auto lu = (size_t)l;
      for (size_t i = 0; i < a.params.weights[lu].size(); ++i) {
        CHECK(a.params.weights[lu][i] == b.params.weights[lu][i]);
        CHECK(a.params.weights[lu][i] == c.params.weights[lu][i]);
      }
      for (size_t i = 0; i < a.params.biases[lu].size(); ++i) {
        CHECK(a.params.biases[lu][i] == c.params.biases[lu][i]);
      }
    }
    for (size_t e = 0; e < a.history.size(); ++e) {
      CHECK(a.history[e].loss.total == c.history[e].loss.total);
      CHECK(a.history[e].grad_norm == c.history[e].grad_norm);
      CHECK(std::isfinite(a.history[e].loss.total));
    }
    CHECK(a.history.back().loss.total <= a.history.front().loss.total);

    std::ostringstream csv;
    zubov::write_history_csv(a.history, csv);
    std::istringstream in(csv.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "epoch,total,res,bc,zero,data,grad_norm,wall_time_s");
    int rows = 0;
    double prev_wall = 0.0;
    while (std::getline(in, line)) {
      double vals[8];
      int epoch_col;
      REQUIRE(std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf,%lf,%lf",
                          &epoch_col, &vals[1], &vals[2], &vals[3], &vals[4],
                          &vals[5], &vals[6], &vals[7]) == 8);
      CHECK(epoch_col == rows);
      CHECK(vals[7] >= prev_wall);
      prev_wall = vals[7];
      ++rows;
    }
    CHECK(rows == 60);
  }

  SUBCASE("mini-batching stays deterministic") {
    TrainConfig mb = cfg;
    mb.batch_size = 16;
    zubov::TrainResult a = zubov::train(p0, s, mb, d);
    zubov::TrainResult b = zubov::train(p0, s, mb, d);
    for (size_t i = 0; i < a.params.weights[0].size(); ++i)
      CHECK(a.params.weights[0][i] == b.params.weights[0][i]);
    CHECK(std::isfinite(a.history.back().loss.total));
  }

  SUBCASE("config validation") {
    auto reject = [&](auto mutate) {
      TrainConfig bad = cfg;
      mutate(bad);
      CHECK_THROWS_AS(zubov::train(p0, s, bad, d), ConfigError);
    };
    reject([](TrainConfig& c) { c.learning_rate = 0; });
    reject([](TrainConfig& c) { c.resample_every = 0; });
    reject([](TrainConfig& c) { c.c_res = -1; });
    reject([](TrainConfig& c) { c.n_collocation = 0; });
    reject([](TrainConfig& c) { c.beta1 = 1.0; });
    reject([](TrainConfig& c) { c.threads = 0; });
    reject([](TrainConfig& c) { c.epochs = -1; });
    CHECK_THROWS_AS(zubov::train(zubov::init_mlp({2, 4, 1}, 0), s, cfg, d),
                    ConfigError);
  }
}

TEST_CASE("training aborts when the loss diverges") {
  SystemSpec s = testsys::test1d();
  Dataset d = grid_dataset_1d(s, 21);
  TrainConfig cfg;
  cfg.n_collocation = 10;
  cfg.n_boundary = 4;
  cfg.n_data = 10;
  cfg.epochs = 50;
  cfg.learning_rate = 1e280;
  MLPParams p0 = zubov::init_mlp({1, 6, 1}, 1);
  CHECK_THROWS_WITH_AS(zubov::train(p0, s, cfg, d),
                       doctest::Contains("non-finite"), zubov::TrainingAbort);
}

TEST_CASE("one-dimensional training reaches the closed form") {
  SystemSpec s = testsys::test1d();
  Dataset d = grid_dataset_1d(s, 1001);

  TrainConfig cfg;
  cfg.n_collocation = 1000;
  cfg.n_boundary = 64;
  cfg.n_data = 1000;
  cfg.epochs = 5000;
  cfg.seed = 4;
  MLPParams p0 = zubov::init_mlp({1, 20, 20, 1}, 4);
  zubov::TrainResult r = zubov::train(p0, s, cfg, d);

  double emax = 0.0;
  for (int i = 0; i <= 180; ++i) {
    double x = -0.9 + i / 100.0;
    emax = std::max(emax, std::fabs(net_value(r.params, x) - x * x));
  }
  CHECK(emax <= 0.02);
  CHECK(r.history.back().loss.total <= r.history.front().loss.total);

  // A short low-rate polish stage settles the optimizer noise floor before
  // the residual is measured.
  TrainConfig polish = cfg;
  polish.learning_rate = 3e-4;
  polish.epochs = 3000;
  polish.seed = 5;
  r = zubov::train(r.params, s, polish, d);

  // Held-out residual check: the mean PDE defect on a fresh grid.
  zubov::NetScratch ws;
  double rsum = 0.0;
  int cnt = 0;
  for (int i = 0; i <= 360; ++i) {
    double x = -0.9 + i / 200.0;
    std::vector<double> xv{x};
    std::vector<double> g(1);
    double w = zubov::forward(r.params, xv, ws);
    zubov::input_gradient(r.params, xv, g, ws);
    if (w < 0.0 || w > 1.0) w = std::clamp(w, 0.0, 1.0);
    double res = zubov::zubov_residual(s.beta(), w, g, s.scaled_field(xv), xv);
    rsum += std::fabs(res);
    ++cnt;
  }
  CHECK(rsum / cnt <= 1e-3);
}
