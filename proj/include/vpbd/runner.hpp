#pragma once

#include "vpbd/error.hpp"
#include "vpbd/flow.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vpbd {

// ConfigInvalid with the offending key path and, when known, the source line.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& message, int line = 0);
  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  std::string key_;
  int line_;
};

// Reads and parses a JSON config. Parse errors carry the line number.
nlohmann::json load_config(const std::filesystem::path& path);

struct RunOverrides {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  bool plots = false;
  std::optional<unsigned> threads;
};

struct RunResult {
  std::filesystem::path out_dir;
  std::vector<std::string> artifacts;  // excluding manifest.json
  nlohmann::json report;
};

// Validates the whole config before any solver runs.
RunResult run_config(const nlohmann::json& config, const RunOverrides& overrides = {});

struct AppendixSettings {
  double fig2_speed = 1.2;
  double fig2_horizon = 6.0;
  double family_speed = 2.0;
  double family_horizon = 4.0;
  int grid_nr = 64;
  int grid_ntheta = 128;
};

inline const std::vector<double>& appendix_family_starts() {
  static const std::vector<double> starts = {-0.2, -0.4, -0.6, -0.8, -0.9, -0.95};
  return starts;
}

RunResult reproduce_appendix(const std::filesystem::path& out_dir, bool plots, const AppendixSettings& settings = {});

// Trajectory table with reflection rows written twice: pre (event_flag 1) and post (event_flag 2).
std::string trajectory_csv(const Trajectory& traj);

// 0 success, 2 config error, 3 solver error, 4 I/O error.
int exit_code_for(ErrorCode code);
nlohmann::json error_json(const Error& error);

}  // namespace vpbd
