#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zubov/oracle.hpp"
#include "zubov/system.hpp"
#include "zubov/train.hpp"
#include "zubov/verify.hpp"

namespace zubov {

inline constexpr const char* kVersion = "0.1.0";

/// System definition as written in a config file; build_system validates
/// and compiles it. Kept as strings so a run is described by one document.
struct SystemConfig {
  std::vector<std::string> field;                 // n expressions in x1..xn
  std::vector<std::string> obstacles;             // may be empty
  std::vector<std::pair<double, double>> roi;     // n [lo, hi] pairs
  double lambda = 0.1;
  int k = 1;
  std::string beta_kind = "tanh";                 // "exp" | "tanh"
  double alpha = 0.1;
  std::string aggregation = "max";                // "max" | "product"
  double origin_tolerance = 1e-9;
};

struct RunConfig {
  SystemConfig system;
  IntegratorOptions oracle;
  DatasetOptions dataset;      // oracle.dataset in the file
  std::vector<int> widths = {2, 30, 30, 1};  // input width tracks the system dim
  TrainConfig train;
  VerifyConfig verify;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
};

/// Parses a JSON run configuration. Unknown keys are rejected and every
/// complaint carries the dotted field path. The system is not built here;
/// call build_system to validate dynamics against the system invariants.
RunConfig load_run_config(const std::string& path);

SystemSpec build_system(const SystemConfig& sc);

std::uint64_t fnv1a64(std::string_view bytes);

/// Reproducibility stamp written next to every command's outputs. Contains
/// no timestamps: reruns must be byte-identical.
std::string manifest_json(const std::string& command, std::uint64_t config_hash,
                          std::uint64_t seed, int threads);

}  // namespace zubov
