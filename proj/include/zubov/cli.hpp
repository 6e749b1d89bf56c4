#pragma once

#include <string>

#include "zubov/config.hpp"

namespace zubov {

/// Exit codes are a stable contract across all subcommands.
enum ExitCode : int {
  kExitCertified = 0,  // also plain success for non-verify commands
  kExitFailed = 1,
  kExitTrainingAbort = 2,
  kExitResourceExhausted = 3,
  kExitConfigError = 4,
};

/// Subcommand bodies. Each writes its outputs plus a manifest under
/// rc.output_dir and returns an exit code; config_hash stamps the manifest.
int cmd_oracle(const RunConfig& rc, std::uint64_t config_hash);
int cmd_train(const RunConfig& rc, std::uint64_t config_hash);
int cmd_verify(const RunConfig& rc, std::uint64_t config_hash,
               const std::string& checkpoint_path = "");
int cmd_export_grid(const RunConfig& rc, std::uint64_t config_hash,
                    const std::string& checkpoint_path, int resolution);
int cmd_simulate(const RunConfig& rc, std::uint64_t config_hash,
                 const std::string& points_path, double t_horizon);

/// Argument parsing and dispatch; never throws.
int cli_main(int argc, const char* const* argv);

}  // namespace zubov
