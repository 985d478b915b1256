// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "tsbc/binary_io.hpp"
#include "tsbc/error.hpp"

namespace tsbc::harness {

/// Line-delimited JSON; each record is flushed as soon as it is written, so
/// an interrupted run leaves every completed line parseable.
class ReportWriter {
 public:
  explicit ReportWriter(const std::string& path) : path_(path), out_(path, std::ios::trunc) {
    if (!out_) throw IoError("cannot open report '" + path + "'");
  }

  void write(const nlohmann::json& record) {
    out_ << record.dump() << '\n';
    out_.flush();
    if (!out_) throw IoError("write failed for report '" + path_ + "'");
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
};

inline std::vector<nlohmann::json> read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report '" + path + "'");
  std::vector<nlohmann::json> records;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      records.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return records;
}

inline std::uint64_t fnv1a64(std::span<const char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string file_hash(const std::string& path) { return hex64(fnv1a64(io::read_file(path))); }

/// JSON has no infinity; unbounded values become null.
inline nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

/// Fixed-width q label for file names, e.g. 0.8 -> "q0.80".
inline std::string q_label(double q) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "q%.2f", q);
  return buf;
}

}  // namespace tsbc::harness
