#pragma once
// Output plumbing: provenance-stamped CSV, stable JSON files, output
// directory resolution.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#ifndef KELDREN_VERSION
#define KELDREN_VERSION "0.1.0"
#endif

namespace keldren {

inline constexpr const char* version = KELDREN_VERSION;

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string config_hash(const nlohmann::json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config.dump())));
  return buf;
}

/// `explicit_dir` if given, else $KELDREN_OUT_DIR, else the working directory.
inline std::filesystem::path output_dir(const std::string& explicit_dir = "") {
  std::filesystem::path p = explicit_dir;
  if (p.empty()) {
    const char* env = std::getenv("KELDREN_OUT_DIR");
    p = env && *env ? env : ".";
  }
  std::filesystem::create_directories(p);
  return p;
}

/// Shortest round-trip representation, locale independent.
inline std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header, const std::string& hash)
      : out_(path), columns_(header.size()) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << "# config_hash=" << hash << " version=" << version << "\n";
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << "\n";
  }

  /// Cells are either numbers or strings.
  struct Cell {
    Cell(double v) : text(format_number(v)) {}
    Cell(int v) : text(std::to_string(v)) {}
    Cell(std::size_t v) : text(std::to_string(v)) {}
    Cell(const char* s) : text(s) {}
    Cell(std::string s) : text(std::move(s)) {}
    std::string text;
  };

  void row(const std::vector<Cell>& cells) {
    if (cells.size() != columns_) throw std::logic_error("csv row width does not match header");
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i].text;
    out_ << "\n";
  }

 private:
  std::ofstream out_;
  std::size_t columns_;
};

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j, const std::string& hash) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  nlohmann::json doc{{"config_hash", hash}, {"version", version}, {"data", j}};
  out << doc.dump(2) << "\n";
}

}  // namespace keldren
