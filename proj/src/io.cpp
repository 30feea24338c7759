#include "vpbd/io.hpp"

#include "vpbd/error.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unistd.h>

namespace vpbd::io {

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", v);
}

nlohmann::json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

Csv::Csv(std::vector<std::string> header) : columns_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) text_ += ',';
    text_ += header[i];
  }
  text_ += '\n';
}

void Csv::row(const std::vector<double>& values) {
  require(values.size() == columns_, fmt::format("CSV row has {} values for {} columns", values.size(), columns_));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) text_ += ',';
    text_ += number(values[i]);
  }
  text_ += '\n';
  ++rows_;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::IoFailure, fmt::format("cannot create {}: {}", path.parent_path().string(), ec.message()));
  }
  auto tmp = path;
  tmp += fmt::format(".tmp{}", ::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, fmt::format("cannot open {} for writing", tmp.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::IoFailure, fmt::format("write to {} failed", tmp.string()));
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::IoFailure, fmt::format("cannot move output into {}", path.string()));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoFailure, "SHA-256 digest failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

namespace {

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                                 "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

std::string svg_plot(const std::vector<Series>& series, const PlotStyle& style) {
  const double width = 640, height = 440, left = 70, right = 20, top = 40, bottom = 50;
  auto yval = [&](double y) { return style.log_y ? (y > 0 ? std::log10(y) : std::numeric_limits<double>::quiet_NaN()) : y; };

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double y = yval(s.y[i]);
      if (!std::isfinite(s.x[i]) || !std::isfinite(y)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (style.unit_circle) {
    x0 = std::min(x0, -1.0);
    x1 = std::max(x1, 1.0);
    y0 = std::min(y0, -1.0);
    y1 = std::max(y1, 1.0);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double pad_y = 0.05 * (y1 - y0);
  y0 -= pad_y;
  y1 += pad_y;

  double sx = (width - left - right) / (x1 - x0);
  double sy = (height - top - bottom) / (y1 - y0);
  if (style.equal_aspect) sx = sy = std::min(sx, sy);
  auto px = [&](double x) { return left + (x - x0) * sx; };
  auto py = [&](double y) { return height - bottom - (y - y0) * sy; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      width, height);
  svg += fmt::format("<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
                     width / 2, escape_xml(style.title));
  svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n", left, top,
                     width - left - right, height - top - bottom);
  svg += fmt::format(
      "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
      left + (width - left - right) / 2, height - 12, escape_xml(style.x_label));
  svg += fmt::format(
      "<text x=\"16\" y=\"{0}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
      "transform=\"rotate(-90 16 {0})\">{1}</text>\n",
      top + (height - top - bottom) / 2, escape_xml(style.log_y ? "log10 " + style.y_label : style.y_label));
  const std::array<std::pair<double, double>, 2> corners = {{{x0, y0}, {x1, y1}}};
  for (const auto& [xv, yv] : corners) {
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{:.3g}</text>\n",
                       px(xv), height - bottom + 14, xv);
    svg += fmt::format("<text x=\"{}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{:.3g}</text>\n",
                       left - 4, py(yv) + 3, yv);
  }
  if (style.unit_circle) {
    svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"{:.2f}\" fill=\"none\" stroke=\"#888\"/>\n", px(0), py(0), sx);
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::string points;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double y = yval(s.y[i]);
      if (!std::isfinite(s.x[i]) || !std::isfinite(y)) continue;
      points += fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(y));
    }
    const char* color = kPalette[k % kPalette.size()];
    svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" points=\"{}\"/>\n", color, points);
    if (!s.label.empty()) {
      svg += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">{}</text>\n",
                         width - right - 150, top + 16 + 14 * static_cast<double>(k), color, escape_xml(s.label));
    }
  }
  svg += "</svg>\n";
  return svg;
}

ArtifactWriter::ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::IoFailure, fmt::format("cannot create output directory {}: {}", dir_.string(), ec.message()));
}

void ArtifactWriter::write(const std::string& name, std::string_view content) {
  require(name != "manifest.json", "manifest.json is reserved");
  write_file_atomic(dir_ / name, content);
  entries_.push_back({name, sha256_hex(content), content.size()});
}

void ArtifactWriter::finish(nlohmann::json manifest) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& e : entries_) list.push_back({{"file", e.name}, {"sha256", e.sha256}, {"bytes", e.bytes}});
  manifest["artifacts"] = std::move(list);
  write_file_atomic(dir_ / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<std::string> ArtifactWriter::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

}  // namespace vpbd::io
