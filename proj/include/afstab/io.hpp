#pragma once

// Small serialization helpers shared by the report writers.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "afstab/conformal.hpp"
#include "afstab/errors.hpp"

namespace afstab {

using json = nlohmann::ordered_json;

/// Shortest round-trip decimal form; "nan"/"inf" spelled out for CSV.
inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

/// Finite doubles become numbers, others null.
inline json json_number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json json_vec(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw InvalidArgument("expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

/// "x;y;z" so a point fits in one CSV cell.
inline std::string fmt_point(const Vec3& v) {
  return fmt_double(v.x()) + ";" + fmt_double(v.y()) + ";" + fmt_double(v.z());
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  CsvTable& row(std::vector<std::string> cells) {
    if (cells.size() != columns_.size()) throw InvalidArgument("CSV row width mismatch");
    rows_.push_back(std::move(cells));
    return *this;
  }

  const std::vector<std::string>& columns() const { return columns_; }
  size_t size() const { return rows_.size(); }

  std::string str() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
      for (size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    line(columns_);
    for (const auto& r : rows_) line(r);
    return out;
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f << content;
}

inline std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// 64-bit FNV-1a; used for config and artifact content hashes.
inline std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

}  // namespace afstab
