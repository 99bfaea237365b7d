#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "chaoslab/config.hpp"

namespace chaoslab {

enum ExitCode { kExitPass = 0, kExitFail = 1, kExitInconclusive = 2 };

struct CliOptions {
  std::string config_path;  // empty: all defaults
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out_dir = "out";
  std::string run_name;  // empty: timestamp
  bool plot_data = false;
  // enumerate-lgraphs shortcuts
  std::optional<int> k, m;
  bool connected = false;
};

// Writes config.ini, data.csv, summary.json (and plot.csv with plot_data) under
// out_dir/<subcommand>/<run>/ and returns the exit code of the verdict.
int run_subcommand(const std::string& subcommand, RunConfig cfg, const CliOptions& opt, std::ostream& log);

// Full command line: parsing, config loading, dispatch. Errors are reported on stderr with exit code 1.
int run_cli(int argc, char** argv);

}  // namespace chaoslab
