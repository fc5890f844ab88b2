#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rydcpw/config.hpp"

namespace rydcpw::cli {

struct GlobalOptions {
  std::filesystem::path config_path;  // empty: built-in defaults
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir = ".";
  int threads = 1;
  bool auto_calibrate = false;
};

int cmd_starkmap(const GlobalOptions& g);
/// Inputs on the command line replace fitres.inputs from the config.
int cmd_fitres(const GlobalOptions& g, const std::vector<std::filesystem::path>& inputs);
int cmd_spectrum(const GlobalOptions& g);
int cmd_rabi(const GlobalOptions& g);
int cmd_compscan(const GlobalOptions& g);
int cmd_fieldmap(const GlobalOptions& g);
int cmd_calibrate(const GlobalOptions& g);
/// Synthetic notch traces, one per configured temperature. A negative
/// snr keeps the config value.
int cmd_synth(const GlobalOptions& g, double snr_db);

/// Error kind to process exit code: 2 config, 3 numerical, 4 I/O.
int exit_code_for(const std::exception& e);

}  // namespace rydcpw::cli
