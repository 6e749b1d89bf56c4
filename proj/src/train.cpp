#include "zubov/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>
#include <thread>

#include "zubov/errors.hpp"
#include "zubov/transform.hpp"

namespace zubov {

namespace {

constexpr int kBlock = 512;  // fixed reduction granularity, thread-invariant

std::size_t uz(int v) { return static_cast<std::size_t>(v); }

void validate(const TrainConfig& cfg) {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("train config: ") + what);
  };
  need(cfg.c_res >= 0 && cfg.c_bc >= 0 && cfg.c_zero >= 0 && cfg.c_data >= 0,
       "loss weights must be nonnegative");
  need(cfg.c_res == 0 || cfg.n_collocation > 0, "n_collocation must be positive");
  need(cfg.c_bc == 0 || cfg.n_boundary > 0, "n_boundary must be positive");
  need(cfg.c_data == 0 || cfg.n_data > 0, "n_data must be positive");
  need(cfg.learning_rate > 0, "learning_rate must be positive");
  need(cfg.beta1 >= 0 && cfg.beta1 < 1, "beta1 must lie in [0,1)");
  need(cfg.beta2 >= 0 && cfg.beta2 < 1, "beta2 must lie in [0,1)");
  need(cfg.epsilon > 0, "epsilon must be positive");
  need(cfg.epochs >= 0, "epochs must be nonnegative");
  need(cfg.batch_size >= 0, "batch_size must be nonnegative");
  need(cfg.resample_every > 0, "resample_every must be positive");
  need(cfg.threads >= 1, "threads must be positive");
}

// Smooth extension of phi to unconstrained net outputs, and the w-derivative
// of phi(w)(1 - w). Both agree with the strict transform on [0, 1].
double phi_ext(const BetaFamily& b, double w) {
  return b.kind == BetaKind::Exp ? b.alpha : b.alpha * (1.0 + w);
}
double dphi_term(const BetaFamily& b, double w) {
  return b.kind == BetaKind::Exp ? -b.alpha : -2.0 * b.alpha * w;
}

struct Window {
  int count = 0;   // points used this epoch
  int offset = 0;  // rotating start into the stored set
  int stored = 0;  // points stored in the batch
};

Window make_window(int stored, int batch_size, int epoch) {
  Window w;
  w.stored = stored;
  w.count = (batch_size > 0 && batch_size < stored) ? batch_size : stored;
  w.offset = (w.count < stored) ? static_cast<int>(
                                      (static_cast<long long>(epoch) * w.count) %
                                      stored)
                                : 0;
  return w;
}

struct BlockSums {
  double res = 0, bc = 0, zero = 0, data = 0;
};

// Loss over the windows, with an optional exact parameter gradient of the
// weighted total. Per-point contributions are accumulated into fixed
// index blocks which are then merged in block order, so thread count and
// scheduling cannot change a single bit of the result.
LossParts evaluate(const MLPParams& p, const TrainBatch& b, const TrainConfig& cfg,
                   const SystemSpec& s, std::span<double> grad, int epoch,
                   int threads) {
  const int dim = b.dim;
  const BetaFamily beta = s.beta();
  const bool with_grad = !grad.empty();
  const int np = with_grad ? param_count(p) : 0;
  if (with_grad && static_cast<int>(grad.size()) != np)
    throw ConfigError("loss gradient buffer size mismatch");

  const Window wc = make_window(cfg.c_res > 0 ? b.collocation_count() : 0,
                                cfg.batch_size, epoch);
  const Window wb = make_window(cfg.c_bc > 0 ? b.boundary_count() : 0,
                                cfg.batch_size, epoch);
  const Window wd = make_window(cfg.c_data > 0 ? b.data_count() : 0,
                                cfg.batch_size, epoch);
  const int n_zero = cfg.c_zero > 0 ? 1 : 0;
  const int total_pts = wc.count + wb.count + n_zero + wd.count;

  LossParts out;
  if (total_pts == 0) return out;

  const int nblocks = (total_pts + kBlock - 1) / kBlock;
  std::vector<BlockSums> sums(uz(nblocks));
  std::vector<std::vector<double>> gblocks;
  if (with_grad) gblocks.assign(uz(nblocks), std::vector<double>(uz(np), 0.0));

  auto run_block = [&](int bi, NetScratch& ws, std::vector<double>& x0) {
    BlockSums& acc = sums[uz(bi)];
    std::span<double> gb =
        with_grad ? std::span<double>(gblocks[uz(bi)]) : std::span<double>();
    const int klo = bi * kBlock, khi = std::min(total_pts, klo + kBlock);
    for (int k = klo; k < khi; ++k) {
      if (k < wc.count) {
        const int idx = (wc.offset + k) % wc.stored;
        std::span<const double> x(b.collocation.data() + uz(idx) * uz(dim), uz(dim));
        std::span<const double> ft(b.colloc_field.data() + uz(idx) * uz(dim), uz(dim));
        const double n2 = b.colloc_norm2[uz(idx)];
        double ty = 0.0;
        const double w = forward_tangent(p, x, ft, ws, &ty);
        const double r = ty + phi_ext(beta, w) * (1.0 - w) * n2;
        acc.res += r * r;
        if (with_grad) {
          const double coef = 2.0 * cfg.c_res * r / wc.count;
          backward_param(p, coef * dphi_term(beta, w) * n2, coef, gb, ws);
        }
      } else if (k < wc.count + wb.count) {
        const int idx = (wb.offset + (k - wc.count)) % wb.stored;
        std::span<const double> x(b.boundary.data() + uz(idx) * uz(dim), uz(dim));
        const double w = forward_tangent(p, x, {}, ws);
        acc.bc += (w - 1.0) * (w - 1.0);
        if (with_grad)
          backward_param(p, 2.0 * cfg.c_bc * (w - 1.0) / wb.count, 0.0, gb, ws);
      } else if (k == wc.count + wb.count && n_zero) {
        const double w = forward_tangent(p, x0, {}, ws);
        acc.zero += w * w;
        if (with_grad) backward_param(p, 2.0 * cfg.c_zero * w, 0.0, gb, ws);
      } else {
        const int idx = (wd.offset + (k - wc.count - wb.count - n_zero)) % wd.stored;
        std::span<const double> x(b.data_points.data() + uz(idx) * uz(dim), uz(dim));
        const double lbl = b.data_labels[uz(idx)];
        const double w = forward_tangent(p, x, {}, ws);
        acc.data += (w - lbl) * (w - lbl);
        if (with_grad)
          backward_param(p, 2.0 * cfg.c_data * (w - lbl) / wd.count, 0.0, gb, ws);
      }
    }
  };

  const int workers = std::min(threads, nblocks);
  if (workers <= 1) {
    NetScratch ws;
    std::vector<double> x0(uz(dim), 0.0);
    for (int bi = 0; bi < nblocks; ++bi) run_block(bi, ws, x0);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(uz(workers));
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        NetScratch ws;
        std::vector<double> x0(uz(dim), 0.0);
        for (int bi = next.fetch_add(1); bi < nblocks; bi = next.fetch_add(1))
          run_block(bi, ws, x0);
      });
    }
    for (auto& th : pool) th.join();
  }

  BlockSums t;
  for (const BlockSums& bs : sums) {
    t.res += bs.res;
    t.bc += bs.bc;
    t.zero += bs.zero;
    t.data += bs.data;
  }
  if (with_grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (const auto& gb : gblocks)
      for (int i = 0; i < np; ++i) grad[uz(i)] += gb[uz(i)];
  }

  out.res = wc.count ? t.res / wc.count : 0.0;
  out.bc = wb.count ? t.bc / wb.count : 0.0;
  out.zero = n_zero ? t.zero : 0.0;
  out.data = wd.count ? t.data / wd.count : 0.0;
  out.total = cfg.c_res * out.res + cfg.c_bc * out.bc + cfg.c_zero * out.zero +
              cfg.c_data * out.data;
  return out;
}

}  // namespace

TrainBatch sample_batch(const SystemSpec& s, const TrainConfig& cfg, Rng& rng,
                        const Dataset* data) {
  validate(cfg);
  const int n = s.dim();
  const Box& roi = s.roi();
  TrainBatch b;
  b.dim = n;

  if (cfg.c_res > 0) {
    b.collocation.resize(uz(cfg.n_collocation) * uz(n));
    b.colloc_field.resize(uz(cfg.n_collocation) * uz(n));
    b.colloc_norm2.resize(uz(cfg.n_collocation));
    std::vector<double> scratch;
    for (int i = 0; i < cfg.n_collocation; ++i) {
      double* x = b.collocation.data() + uz(i) * uz(n);
      double n2 = 0.0;
      for (int d = 0; d < n; ++d) {
        x[d] = rng.uniform(roi.dims[uz(d)].lo, roi.dims[uz(d)].hi);
        n2 += x[d] * x[d];
      }
      b.colloc_norm2[uz(i)] = n2;
      s.scaled_field(std::span<const double>(x, uz(n)),
                     std::span<double>(b.colloc_field.data() + uz(i) * uz(n), uz(n)),
                     scratch);
    }
  }

  if (cfg.c_bc > 0) {
    // A face pins one coordinate at an endpoint; its area is the product of
    // the remaining widths. 2n faces, picked proportionally to area.
    std::vector<double> cum(uz(2 * n));
    double total = 0.0;
    for (int d = 0; d < n; ++d) {
      double a = 1.0;
      for (int j = 0; j < n; ++j)
        if (j != d) a *= roi.dims[uz(j)].width();
      total += a;
      cum[uz(2 * d)] = total;
      total += a;
      cum[uz(2 * d + 1)] = total;
    }
    b.boundary.resize(uz(cfg.n_boundary) * uz(n));
    for (int i = 0; i < cfg.n_boundary; ++i) {
      const double pick = rng.uniform01() * total;
      int face = 0;
      while (face < 2 * n - 1 && pick >= cum[uz(face)]) ++face;
      const int d = face / 2;
      double* x = b.boundary.data() + uz(i) * uz(n);
      for (int j = 0; j < n; ++j)
        x[j] = rng.uniform(roi.dims[uz(j)].lo, roi.dims[uz(j)].hi);
      x[d] = (face % 2 == 0) ? roi.dims[uz(d)].lo : roi.dims[uz(d)].hi;
    }
  }

  if (cfg.c_data > 0) {
    if (!data || data->labels.empty())
      throw ConfigError("data term requested but no dataset provided");
    const int avail = static_cast<int>(data->labels.size());
    std::vector<int> order(uz(avail));
    std::iota(order.begin(), order.end(), 0);
    const int take = std::min(cfg.n_data, avail);
    for (int i = 0; i < take; ++i)
      std::swap(order[uz(i)], order[uz(rng.uniform_int(i, avail - 1))]);
    b.data_points.resize(uz(take) * uz(n));
    b.data_labels.resize(uz(take));
    for (int i = 0; i < take; ++i) {
      const OracleLabel& lbl = data->labels[uz(order[uz(i)])];
      for (int d = 0; d < n; ++d)
        b.data_points[uz(i) * uz(n) + uz(d)] = lbl.x[uz(d)];
      b.data_labels[uz(i)] = lbl.w_value;
    }
  }
  return b;
}

LossParts pinn_loss(const MLPParams& p, const TrainBatch& b,
                    const TrainConfig& cfg, const SystemSpec& s) {
  return evaluate(p, b, cfg, s, {}, 0, 1);
}

LossParts loss_param_gradient(const MLPParams& p, const TrainBatch& b,
                              const TrainConfig& cfg, const SystemSpec& s,
                              std::span<double> grad) {
  return evaluate(p, b, cfg, s, grad, 0, 1);
}

TrainResult train(const MLPParams& p0, const SystemSpec& s,
                  const TrainConfig& cfg, const Dataset& data) {
  validate(cfg);
  if (p0.input_dim() != s.dim())
    throw ConfigError("network input dimension does not match the system");

  TrainResult out;
  out.params = p0;
  if (cfg.epochs == 0) return out;
  out.history.reserve(uz(cfg.epochs));

  Rng rng(derive_seed(cfg.seed, "train-sampling"));
  TrainBatch batch = sample_batch(s, cfg, rng, &data);

  const int np = param_count(out.params);
  std::vector<double> theta(uz(np)), grad(uz(np));
  std::vector<double> m(uz(np), 0.0), v(uz(np), 0.0);
  flatten(out.params, theta);

  const auto t0 = std::chrono::steady_clock::now();
  double b1t = 1.0, b2t = 1.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch > 0 && epoch % cfg.resample_every == 0) {
      TrainBatch fresh = sample_batch(s, cfg, rng, &data);
      batch.collocation = std::move(fresh.collocation);
      batch.colloc_field = std::move(fresh.colloc_field);
      batch.colloc_norm2 = std::move(fresh.colloc_norm2);
      batch.boundary = std::move(fresh.boundary);
    }

    LossParts loss =
        evaluate(out.params, batch, cfg, s, grad, epoch, cfg.threads);
    double gnorm2 = 0.0;
    for (double g : grad) gnorm2 += g * g;
    const double gnorm = std::sqrt(gnorm2);

    if (!std::isfinite(loss.total) || !std::isfinite(gnorm)) {
      auto bad = [](double x) { return !std::isfinite(x); };
      std::string what = "training diverged at epoch " + std::to_string(epoch) +
                         ": non-finite";
      if (bad(loss.res)) what += " residual term";
      else if (bad(loss.bc)) what += " boundary term";
      else if (bad(loss.zero)) what += " origin term";
      else if (bad(loss.data)) what += " data term";
      else what += " gradient";
      throw TrainingAbort(what);
    }

    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    const double mc = 1.0 / (1.0 - b1t), vc = 1.0 / (1.0 - b2t);
    for (int i = 0; i < np; ++i) {
      auto iu = uz(i);
      m[iu] = cfg.beta1 * m[iu] + (1.0 - cfg.beta1) * grad[iu];
      v[iu] = cfg.beta2 * v[iu] + (1.0 - cfg.beta2) * grad[iu] * grad[iu];
      theta[iu] -= cfg.learning_rate * (m[iu] * mc) /
                   (std::sqrt(v[iu] * vc) + cfg.epsilon);
    }
    unflatten(out.params, theta);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss;
    rec.grad_norm = gnorm;
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.history.push_back(rec);
  }
  return out;
}

void write_history_csv(const std::vector<EpochRecord>& history, std::ostream& out) {
  out << "epoch,total,res,bc,zero,data,grad_norm,wall_time_s\n";
  char buf[64];
  auto put = [&](double v, char sep) {
    std::snprintf(buf, sizeof buf, "%.17g%c", v, sep);
    out << buf;
  };
  for (const EpochRecord& r : history) {
    out << r.epoch << ',';
    put(r.loss.total, ',');
    put(r.loss.res, ',');
    put(r.loss.bc, ',');
    put(r.loss.zero, ',');
    put(r.loss.data, ',');
    put(r.grad_norm, ',');
    put(r.wall_time_s, '\n');
  }
}

}  // namespace zubov
