#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ustat {

inline constexpr const char* kVersion = "0.1.0";

struct RunOptions {
  std::string config_path;
  std::optional<int> threads;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed_override;
};

struct RunResult {
  int exit_code = 0;  // 0 pass, 2 check failure
  bool pass = true;
  std::string out_dir;
  std::string summary_path;
  std::string manifest_path;
  std::map<std::string, std::string> digests;  // file name -> sha256
};

/// Parses the config, runs the experiment, and writes CSV tables,
/// summary.json and manifest.json. Throws ustat::Error on failure.
RunResult run_experiment(const RunOptions& options);

/// USTAT_SEED, when set; ConfigInvalid if it is not an unsigned integer.
std::optional<std::uint64_t> seed_from_env();

/// Built-in kernels, laws, schemes, designs, criteria and classes, one per line.
std::vector<std::string> list_builtins();

std::string sha256_file(const std::string& path);
std::string sha256_hex(const std::string& bytes);

}  // namespace ustat
