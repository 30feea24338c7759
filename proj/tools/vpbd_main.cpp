#include "vpbd/error.hpp"
#include "vpbd/io.hpp"
#include "vpbd/runner.hpp"

#include "CLI11.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <filesystem>
#include <iostream>

namespace {

int report(const vpbd::Error& e, int line = 0) {
  auto j = vpbd::error_json(e);
  if (line > 0) j["line"] = line;
  std::cerr << j.dump() << "\n";
  return vpbd::exit_code_for(e.code());
}

// Locates the line of the last segment of a key path in the raw config text.
int find_key_line(const std::string& path, const std::string& key) {
  if (key.empty()) return 0;
  const auto dot = key.rfind('.');
  const std::string needle = "\"" + (dot == std::string::npos ? key : key.substr(dot + 1)) + "\"";
  std::string text;
  try {
    text = vpbd::io::read_file(path);
  } catch (const std::exception&) {
    return 0;
  }
  const auto pos = text.find(needle);
  if (pos == std::string::npos) return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vlasov-Poisson characteristics, fields and particle runs on bounded convex domains"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  bool plots = false;
  std::uint64_t seed = 0;
  unsigned threads = 0;

  auto* run = app.add_subcommand("run", "Run a JSON config");
  run->add_option("config", config_path, "Config file")->required();
  auto* out_opt = run->add_option("--out", out_dir, "Output directory");
  run->add_flag("--plots", plots, "Also write SVG plots");
  auto* seed_opt = run->add_option("--seed", seed, "Override the sampling seed");
  auto* threads_opt = run->add_option("--threads", threads, "Worker threads (0 = all cores)");

  std::string appendix_out = "appendix";
  bool appendix_plots = false;
  auto* appendix = app.add_subcommand("reproduce-appendix", "Regenerate the appendix figure data");
  appendix->add_option("--out", appendix_out, "Output directory");
  appendix->add_flag("--plots", appendix_plots, "Also write SVG plots");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (*run) {
      vpbd::RunOverrides overrides;
      if (*out_opt) overrides.out_dir = out_dir;
      if (*seed_opt) overrides.seed = seed;
      if (*threads_opt) overrides.threads = threads;
      overrides.plots = plots;
      try {
        const auto config = vpbd::load_config(config_path);
        const auto result = vpbd::run_config(config, overrides);
        fmt::print("wrote {} artifacts to {}\n", result.artifacts.size() + 1, result.out_dir.string());
      } catch (const vpbd::ConfigError& e) {
        return report(e, e.line() > 0 ? e.line() : find_key_line(config_path, e.key()));
      }
    } else {
      const auto result = vpbd::reproduce_appendix(appendix_out, appendix_plots);
      fmt::print("wrote {} artifacts to {}\n", result.artifacts.size() + 1, result.out_dir.string());
    }
  } catch (const vpbd::Error& e) {
    return report(e);
  } catch (const std::filesystem::filesystem_error& e) {
    return report(vpbd::Error(vpbd::ErrorCode::IoFailure, e.what()));
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "Unexpected"}, {"message", e.what()}, {"exit_code", 3}}.dump() << "\n";
    return 3;
  }
  return 0;
}
