#include "zubov/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "zubov/errors.hpp"
#include "zubov/net.hpp"
#include "zubov/oracle.hpp"
#include "zubov/rng.hpp"
#include "zubov/train.hpp"
#include "zubov/verify.hpp"

namespace zubov {

namespace {

std::string num17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError(dir + ": cannot create output directory");
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw ConfigError(path + ": cannot write");
}

void stamp(const RunConfig& rc, const std::string& command,
           std::uint64_t config_hash) {
  write_file(rc.output_dir + "/manifest-" + command + ".json",
             manifest_json(command, config_hash, rc.seed, rc.train.threads));
}

Dataset make_dataset(const SystemSpec& s, const RunConfig& rc) {
  DatasetOptions ds = rc.dataset;
  ds.seed = derive_seed(rc.seed, "dataset");
  return generate_dataset(s, rc.oracle, ds);
}

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

}  // namespace

int cmd_oracle(const RunConfig& rc, std::uint64_t config_hash) {
  SystemSpec s = build_system(rc.system);
  ensure_dir(rc.output_dir);
  Dataset d = make_dataset(s, rc);

  std::string path = rc.output_dir + "/labels.csv";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  write_labels_csv(d, s.dim(), out);
  if (!out) throw ConfigError(path + ": cannot write");
  stamp(rc, "oracle", config_hash);

  std::printf(
      "labels: %zu (converged %d, exited_unsafe %d, exited_roi %d, "
      "cap_reached %d, dropped %d)\n",
      d.labels.size(), d.converged, d.exited_unsafe, d.exited_roi,
      d.cap_reached, d.inconclusive_dropped);
  std::printf("wrote %s\n", path.c_str());
  return kExitCertified;
}

int cmd_train(const RunConfig& rc, std::uint64_t config_hash) {
  SystemSpec s = build_system(rc.system);
  ensure_dir(rc.output_dir);

  Dataset data;
  if (rc.train.c_data > 0 && rc.train.n_data > 0) data = make_dataset(s, rc);

  TrainConfig tc = rc.train;
  tc.seed = rc.seed;
  MLPParams p0 = init_mlp(rc.widths, derive_seed(rc.seed, "init"));

  TrainResult r;
  try {
    r = train(p0, s, tc, data);
  } catch (const TrainingAbort& e) {
    std::fprintf(stderr, "training aborted: %s\n", e.what());
    return kExitTrainingAbort;
  }

  std::string ckpt = rc.output_dir + "/checkpoint.json";
  save_checkpoint(r.params, ckpt);
  std::ofstream hist(rc.output_dir + "/history.csv",
                     std::ios::binary | std::ios::trunc);
  write_history_csv(r.history, hist);
  stamp(rc, "train", config_hash);

  if (!r.history.empty()) {
    const EpochRecord& last = r.history.back();
    std::printf("final loss: total %s (res %s, bc %s, zero %s, data %s)\n",
                num17(last.loss.total).c_str(), num17(last.loss.res).c_str(),
                num17(last.loss.bc).c_str(), num17(last.loss.zero).c_str(),
                num17(last.loss.data).c_str());
  }
  std::printf("wrote %s\n", ckpt.c_str());
  return kExitCertified;
}

int cmd_verify(const RunConfig& rc, std::uint64_t config_hash,
               const std::string& checkpoint_path) {
  SystemSpec s = build_system(rc.system);
  ensure_dir(rc.output_dir);
  std::string ckpt = checkpoint_path.empty()
                         ? rc.output_dir + "/checkpoint.json"
                         : checkpoint_path;
  MLPParams net = load_checkpoint(ckpt, s.dim());
  Linearization lin = make_linearization(s);

  auto t0 = std::chrono::steady_clock::now();
  CertificationReport rep = bisect_levels(net, s, lin, rc.verify);
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::string path = rc.output_dir + "/report.json";
  write_file(path, report_to_json(rep));
  stamp(rc, "verify", config_hash);

  std::printf("status: %s  c1 %s  c2 %s  rho_quad %s\n", to_string(rep.status),
              num17(rep.c1).c_str(), num17(rep.c2).c_str(),
              num17(rep.rho_quad).c_str());
  std::printf("boxes: bridge %ld, decrease %ld, separation %ld (%.1f s)\n",
              rep.boxes_bridge, rep.boxes_decrease, rep.boxes_separation, wall);
  std::printf("wrote %s\n", path.c_str());
  switch (rep.status) {
    case CertStatus::Certified: return kExitCertified;
    case CertStatus::Failed: return kExitFailed;
    case CertStatus::ResourceExhausted: return kExitResourceExhausted;
  }
  return kExitFailed;
}

int cmd_export_grid(const RunConfig& rc, std::uint64_t config_hash,
                    const std::string& checkpoint_path, int resolution) {
  if (resolution <= 0) throw ConfigError("resolution must be positive");
  SystemSpec s = build_system(rc.system);
  ensure_dir(rc.output_dir);

  std::optional<MLPParams> net;
  std::optional<Oracle> oracle;
  if (!checkpoint_path.empty())
    net = load_checkpoint(checkpoint_path, s.dim());
  else
    oracle.emplace(s, rc.oracle);

  const int n = s.dim();
  std::string path = rc.output_dir + "/grid.csv";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (int d = 0; d < n; ++d) out << "x" << d + 1 << ",";
  out << "W,safe\n";

  std::vector<int> idx(n, 0);
  std::vector<double> x(n);
  long rows = 0;
  for (;;) {
    for (int d = 0; d < n; ++d) {
      const Interval& r = s.roi().dims[d];
      x[d] = resolution == 1 ? r.mid()
                             : r.lo + idx[d] * (r.hi - r.lo) / (resolution - 1);
    }
    double w = net ? forward(*net, x) : oracle->zubov_value(x).w_value;
    for (int d = 0; d < n; ++d) out << num17(x[d]) << ",";
    out << num17(w) << "," << (s.h_max(x) < 1.0 ? 1 : 0) << "\n";
    ++rows;

    int d = n - 1;
    while (d >= 0 && ++idx[d] == resolution) idx[d--] = 0;
    if (d < 0) break;
  }
  if (!out) throw ConfigError(path + ": cannot write");
  stamp(rc, "export-grid", config_hash);
  std::printf("wrote %s (%ld rows)\n", path.c_str(), rows);
  return kExitCertified;
}

int cmd_simulate(const RunConfig& rc, std::uint64_t config_hash,
                 const std::string& points_path, double t_horizon) {
  if (!(t_horizon > 0)) throw ConfigError("T must be positive");
  SystemSpec s = build_system(rc.system);
  const int n = s.dim();

  std::ifstream in(points_path);
  if (!in) throw ConfigError(points_path + ": cannot open points file");
  std::vector<std::vector<double>> points;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    std::vector<double> x;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      while (end && *end == ' ') ++end;
      if (!end || *end != '\0' || cell.empty())
        throw ConfigError(points_path + ":" + std::to_string(lineno) +
                          ": malformed number '" + cell + "'");
      x.push_back(v);
    }
    if ((int)x.size() != n)
      throw ConfigError(points_path + ":" + std::to_string(lineno) +
                        ": expected " + std::to_string(n) + " coordinates");
    points.push_back(std::move(x));
  }

  ensure_dir(rc.output_dir);
  Oracle oracle(s, rc.oracle);
  std::ofstream traj(rc.output_dir + "/trajectories.csv",
                     std::ios::binary | std::ios::trunc);
  traj << "point,t";
  for (int d = 0; d < n; ++d) traj << ",x" << d + 1;
  traj << "\n";
  std::ofstream summary(rc.output_dir + "/summary.csv",
                        std::ios::binary | std::ios::trunc);
  summary << "point,status,t_end,final_norm,min_gamma\n";

  for (std::size_t i = 0; i < points.size(); ++i) {
    std::vector<TracePoint> trace;
    IntegrationResult res = oracle.simulate_original(points[i], t_horizon, &trace);
    double min_gamma = s.gamma(points[i]);
    for (const TracePoint& tp : trace) {
      traj << i << "," << num17(tp.first);
      for (double v : tp.second) traj << "," << num17(v);
      traj << "\n";
      min_gamma = std::min(min_gamma, s.gamma(tp.second));
    }
    summary << i << "," << to_string(res.status) << "," << num17(res.t_end)
            << "," << num17(norm2(res.x_end)) << "," << num17(min_gamma)
            << "\n";
  }
  if (!traj || !summary) throw ConfigError("cannot write simulation outputs");
  stamp(rc, "simulate", config_hash);
  std::printf("simulated %zu points, wrote %s/{trajectories,summary}.csv\n",
              points.size(), rc.output_dir.c_str());
  return kExitCertified;
}

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Zubov value functions, PDE-residual training, and certified "
               "safe regions of attraction"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, points;
  long long seed = -1;
  int threads = 0;
  int resolution = 201;
  double t_horizon = 200.0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration JSON")
        ->required();
    sub->add_option("--out", out_dir, "output directory (overrides config)");
    sub->add_option("--seed", seed, "global seed override");
    sub->add_option("--threads", threads, "worker threads override");
  };

  CLI::App* oracle = app.add_subcommand(
      "oracle", "integrate trajectories and label a dataset");
  add_common(oracle);
  CLI::App* train =
      app.add_subcommand("train", "train a network against the PDE losses");
  add_common(train);
  CLI::App* verify = app.add_subcommand(
      "verify", "certify sublevel sets of a trained checkpoint");
  add_common(verify);
  verify->add_option("--checkpoint", checkpoint,
                     "checkpoint path (default <out>/checkpoint.json)");
  CLI::App* grid =
      app.add_subcommand("export-grid", "evaluate W on a uniform grid");
  add_common(grid);
  grid->add_option("--checkpoint", checkpoint,
                   "evaluate this checkpoint instead of the oracle");
  grid->add_option("--resolution", resolution, "grid points per dimension");
  CLI::App* simulate = app.add_subcommand(
      "simulate", "integrate the original field from listed points");
  add_common(simulate);
  simulate->add_option("--points", points, "CSV file of initial points")
      ->required();
  simulate->add_option("--T", t_horizon, "time horizon");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfigError;
  }

  try {
    std::ifstream cfg_in(config_path, std::ios::binary);
    if (!cfg_in) throw ConfigError(config_path + ": cannot open config file");
    std::stringstream cfg_bytes;
    cfg_bytes << cfg_in.rdbuf();
    const std::uint64_t hash = fnv1a64(cfg_bytes.str());

    RunConfig rc = load_run_config(config_path);
    if (!out_dir.empty()) rc.output_dir = out_dir;
    if (seed >= 0) rc.seed = (std::uint64_t)seed;
    if (threads > 0) {
      rc.train.threads = threads;
      rc.dataset.threads = threads;
    }

    if (oracle->parsed()) return cmd_oracle(rc, hash);
    if (train->parsed()) return cmd_train(rc, hash);
    if (verify->parsed()) return cmd_verify(rc, hash, checkpoint);
    if (grid->parsed()) return cmd_export_grid(rc, hash, checkpoint, resolution);
    if (simulate->parsed()) return cmd_simulate(rc, hash, points, t_horizon);
    return kExitConfigError;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfigError;
  }
}

}  // namespace zubov
