#include "zubov/config.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <json.hpp>
#include <sstream>
#include <string>

#include "zubov/errors.hpp"

namespace zubov {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    if (!known) fail(path + "." + item.key(), "unknown key");
  }
}

const json* child(const json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

const json& require(const json& j, const char* key, const std::string& path) {
  const json* c = child(j, key);
  if (!c) fail(path + "." + key, "missing required field");
  return *c;
}

double num(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

std::string str(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

void opt_num(const json& j, const char* key, const std::string& path, double& out) {
  if (const json* c = child(j, key)) out = num(*c, path + "." + key);
}

void opt_int(const json& j, const char* key, const std::string& path, int& out) {
  if (const json* c = child(j, key)) out = integer(*c, path + "." + key);
}

void parse_system(const json& j, const std::string& path, SystemConfig& out) {
  if (!j.is_object()) fail(path, "expected an object");
  check_keys(j, path,
             {"field", "obstacles", "roi", "lambda", "k", "beta",
              "aggregation", "origin_tolerance"});

  const json& field = require(j, "field", path);
  if (!field.is_array() || field.empty())
    fail(path + ".field", "expected a non-empty array of expressions");
  for (std::size_t i = 0; i < field.size(); ++i)
    out.field.push_back(str(field[i], path + ".field[" + std::to_string(i) + "]"));

  if (const json* obs = child(j, "obstacles")) {
    if (!obs->is_array()) fail(path + ".obstacles", "expected an array");
    for (std::size_t i = 0; i < obs->size(); ++i)
      out.obstacles.push_back(
          str((*obs)[i], path + ".obstacles[" + std::to_string(i) + "]"));
  }

  const json& roi = require(j, "roi", path);
  if (!roi.is_array() || roi.size() != field.size())
    fail(path + ".roi", "expected one [lo, hi] pair per state dimension");
  for (std::size_t i = 0; i < roi.size(); ++i) {
    std::string p = path + ".roi[" + std::to_string(i) + "]";
    if (!roi[i].is_array() || roi[i].size() != 2) fail(p, "expected [lo, hi]");
    double lo = num(roi[i][0], p), hi = num(roi[i][1], p);
    if (!(lo < hi)) fail(p, "lo must be < hi");
    out.roi.emplace_back(lo, hi);
  }

  opt_num(j, "lambda", path, out.lambda);
  opt_int(j, "k", path, out.k);
  opt_num(j, "origin_tolerance", path, out.origin_tolerance);

  const json& beta = require(j, "beta", path);
  if (!beta.is_object()) fail(path + ".beta", "expected an object");
  check_keys(beta, path + ".beta", {"kind", "alpha"});
  out.beta_kind = str(require(beta, "kind", path + ".beta"), path + ".beta.kind");
  if (out.beta_kind != "exp" && out.beta_kind != "tanh")
    fail(path + ".beta.kind", "expected \"exp\" or \"tanh\"");
  out.alpha = num(require(beta, "alpha", path + ".beta"), path + ".beta.alpha");

  if (const json* agg = child(j, "aggregation")) {
    out.aggregation = str(*agg, path + ".aggregation");
    if (out.aggregation != "max" && out.aggregation != "product")
      fail(path + ".aggregation", "expected \"max\" or \"product\"");
  }
}

void parse_oracle(const json& j, const std::string& path, IntegratorOptions& io,
                  DatasetOptions& ds) {
  if (!j.is_object()) fail(path, "expected an object");
  check_keys(j, path,
             {"method", "dt", "rtol", "atol", "dt_max", "t_max", "r_conv",
              "v_cap", "unsafe_margin", "dataset"});
  if (const json* m = child(j, "method")) {
    std::string name = str(*m, path + ".method");
    if (name == "rk45")
      io.method = IntegratorMethod::RK45Adaptive;
    else if (name == "rk4")
      io.method = IntegratorMethod::RK4Fixed;
    else
      fail(path + ".method", "expected \"rk45\" or \"rk4\"");
  }
  opt_num(j, "dt", path, io.dt);
  opt_num(j, "rtol", path, io.rtol);
  opt_num(j, "atol", path, io.atol);
  opt_num(j, "dt_max", path, io.dt_max);
  opt_num(j, "t_max", path, io.t_max);
  opt_num(j, "r_conv", path, io.r_conv);
  opt_num(j, "v_cap", path, io.v_cap);
  opt_num(j, "unsafe_margin", path, io.unsafe_margin);

  if (const json* d = child(j, "dataset")) {
    std::string dpath = path + ".dataset";
    if (!d->is_object()) fail(dpath, "expected an object");
    check_keys(*d, dpath, {"count", "strategy", "grid_range"});
    opt_int(*d, "count", dpath, ds.count);
    if (const json* s = child(*d, "strategy")) {
      std::string name = str(*s, dpath + ".strategy");
      if (name == "uniform")
        ds.strategy = SampleStrategy::UniformRoi;
      else if (name == "grid")
        ds.strategy = SampleStrategy::Grid;
      else
        fail(dpath + ".strategy", "expected \"uniform\" or \"grid\"");
    }
    if (const json* g = child(*d, "grid_range")) {
      std::string gpath = dpath + ".grid_range";
      if (ds.strategy != SampleStrategy::Grid)
        fail(gpath, "only valid with the \"grid\" strategy");
      if (!g->is_array() || g->empty())
        fail(gpath, "expected one [lo, hi] pair per state dimension");
      Box range;
      for (std::size_t i = 0; i < g->size(); ++i) {
        std::string p = gpath + "[" + std::to_string(i) + "]";
        if (!(*g)[i].is_array() || (*g)[i].size() != 2) fail(p, "expected [lo, hi]");
        double lo = num((*g)[i][0], p), hi = num((*g)[i][1], p);
        if (!(lo < hi)) fail(p, "lo must be < hi");
        range.dims.push_back(Interval{lo, hi});
      }
      ds.grid_range = std::move(range);
    }
  }
}

void parse_train(const json& j, const std::string& path, TrainConfig& tc,
                 std::vector<int>& widths) {
  if (!j.is_object()) fail(path, "expected an object");
  check_keys(j, path,
             {"widths", "epochs", "n_collocation", "n_boundary", "n_data",
              "weights", "learning_rate", "beta1", "beta2", "epsilon",
              "batch_size", "resample_every"});
  if (const json* w = child(j, "widths")) {
    if (!w->is_array() || w->size() < 2)
      fail(path + ".widths", "expected an array of at least two layer widths");
    widths.clear();
    for (std::size_t i = 0; i < w->size(); ++i)
      widths.push_back(
          integer((*w)[i], path + ".widths[" + std::to_string(i) + "]"));
  }
  opt_int(j, "epochs", path, tc.epochs);
  opt_int(j, "n_collocation", path, tc.n_collocation);
  opt_int(j, "n_boundary", path, tc.n_boundary);
  opt_int(j, "n_data", path, tc.n_data);
  opt_num(j, "learning_rate", path, tc.learning_rate);
  opt_num(j, "beta1", path, tc.beta1);
  opt_num(j, "beta2", path, tc.beta2);
  opt_num(j, "epsilon", path, tc.epsilon);
  opt_int(j, "batch_size", path, tc.batch_size);
  opt_int(j, "resample_every", path, tc.resample_every);
  if (const json* w = child(j, "weights")) {
    std::string wpath = path + ".weights";
    if (!w->is_object()) fail(wpath, "expected an object");
    check_keys(*w, wpath, {"res", "bc", "zero", "data"});
    opt_num(*w, "res", wpath, tc.c_res);
    opt_num(*w, "bc", wpath, tc.c_bc);
    opt_num(*w, "zero", wpath, tc.c_zero);
    opt_num(*w, "data", wpath, tc.c_data);
  }
}

void parse_verify(const json& j, const std::string& path, VerifyConfig& vc) {
  if (!j.is_object()) fail(path, "expected an object");
  check_keys(j, path,
             {"decrease_margin", "min_box_width", "max_boxes", "bisection_tol",
              "inner_radius", "unsafe_clearance"});
  opt_num(j, "decrease_margin", path, vc.decrease_margin);
  opt_num(j, "min_box_width", path, vc.min_box_width);
  if (const json* m = child(j, "max_boxes"))
    vc.max_boxes = (long)integer(*m, path + ".max_boxes");
  opt_num(j, "bisection_tol", path, vc.bisection_tol);
  opt_num(j, "inner_radius", path, vc.inner_radius);
  opt_num(j, "unsafe_clearance", path, vc.unsafe_clearance);
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();

  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": top level must be an object");
  check_keys(j, "config",
             {"system", "oracle", "train", "verify", "seed", "output_dir"});

  RunConfig rc;
  parse_system(require(j, "system", "config"), "system", rc.system);
  rc.widths.front() = (int)rc.system.field.size();  // default net follows dim
  if (const json* o = child(j, "oracle"))
    parse_oracle(*o, "oracle", rc.oracle, rc.dataset);
  if (const json* t = child(j, "train")) parse_train(*t, "train", rc.train, rc.widths);
  if (const json* v = child(j, "verify")) parse_verify(*v, "verify", rc.verify);
  if (const json* s = child(j, "seed")) {
    if (!s->is_number_integer() || s->get<long long>() < 0)
      fail("seed", "expected a non-negative integer");
    rc.seed = s->get<std::uint64_t>();
  }
  if (const json* o = child(j, "output_dir"))
    rc.output_dir = str(*o, "output_dir");

  const int n = (int)rc.system.field.size();
  if (rc.widths.front() != n)
    fail("train.widths", "first width must equal the system dimension");
  if (rc.widths.back() != 1) fail("train.widths", "last width must be 1");
  if (rc.dataset.grid_range && (int)rc.dataset.grid_range->dims.size() != n)
    fail("oracle.dataset.grid_range", "expected one [lo, hi] pair per state dimension");
  return rc;
}

SystemSpec build_system(const SystemConfig& sc) {
  SystemInit init;
  init.n = (int)sc.field.size();
  try {
    for (const std::string& e : sc.field)
      init.f.push_back(Expr::parse(e, init.n));
    for (const std::string& e : sc.obstacles)
      init.obstacles.push_back(Expr::parse(e, init.n));
  } catch (const Error& e) {
    throw ConfigError(std::string("system expression: ") + e.what());
  }
  std::vector<Interval> dims;
  for (auto [lo, hi] : sc.roi) dims.push_back(Interval{lo, hi});
  init.roi = Box{std::move(dims)};
  init.lambda = sc.lambda;
  init.k = sc.k;
  init.beta = BetaFamily{sc.beta_kind == "exp" ? BetaKind::Exp : BetaKind::Tanh,
                         sc.alpha};
  init.origin_tolerance = sc.origin_tolerance;
  init.aggregation = sc.aggregation == "product" ? GammaAggregation::Product
                                                 : GammaAggregation::Max;
  return SystemSpec(std::move(init));
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string manifest_json(const std::string& command, std::uint64_t config_hash,
                          std::uint64_t seed, int threads) {
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx", (unsigned long long)config_hash);
  std::string out = "{\n  \"command\": \"" + command + "\"";
  out += ",\n  \"config_fnv1a64\": \"" + std::string(hex) + "\"";
  out += ",\n  \"seed\": " + std::to_string(seed);
  out += ",\n  \"threads\": " + std::to_string(threads);
  out += ",\n  \"version\": \"" + std::string(kVersion) + "\"\n}\n";
  return out;
}

}  // namespace zubov
