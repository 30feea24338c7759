#pragma once

#include "json.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vpbd::io {

// 17 significant digits; non-finite values print as nan, inf, -inf.
std::string number(double v);
// JSON value for a double, null when not finite.
nlohmann::json json_number(double v);

// Comma-separated text with a header row and LF line endings.
class Csv {
 public:
  explicit Csv(std::vector<std::string> header);
  void row(const std::vector<double>& values);
  const std::string& str() const { return text_; }
  std::size_t rows() const { return rows_; }

 private:
  std::size_t columns_;
  std::size_t rows_ = 0;
  std::string text_;
};

// Writes through a temporary file in the same directory and renames it into place.
// Throws Error(IoFailure).
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

std::string sha256_hex(std::string_view data);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotStyle {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool equal_aspect = false;
  bool unit_circle = false;
  bool log_y = false;
};

// Minimal SVG line chart: one polyline per series plus axes box and labels.
std::string svg_plot(const std::vector<Series>& series, const PlotStyle& style);

// Collects the files written for one run and emits the manifest last.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  void write(const std::string& name, std::string_view content);
  // Adds the artifact list to `manifest` and writes manifest.json.
  void finish(nlohmann::json manifest);
  std::vector<std::string> names() const;

 private:
  struct Entry {
    std::string name;
    std::string sha256;
    std::size_t bytes;
  };
  std::filesystem::path dir_;
  std::vector<Entry> entries_;
};

}  // namespace vpbd::io
