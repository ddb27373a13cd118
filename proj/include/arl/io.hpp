#ifndef ARL_IO_HPP
#define ARL_IO_HPP

// Artifact helpers: stable content hashing and CSV output with a provenance
// header line.  Numbers are written with 17 significant digits so files
// round-trip and compare byte-for-byte.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "arl/errors.hpp"

namespace arl {

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct ArtifactMeta {
  std::string producer;
  std::string config_hash;
  std::uint64_t seed = 0;

  std::string header_line() const {
    return "# producer=" + producer + " config_hash=" + config_hash + " seed=" + std::to_string(seed);
  }
};

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const ArtifactMeta& meta, std::initializer_list<std::string_view> columns)
      : out_(path, std::ios::binary) {
    if (!out_) throw ConfigurationError("cannot open " + path + " for writing");
    out_ << meta.header_line() << '\n';
    bool first = true;
    for (auto c : columns) {
      if (!first) out_ << ',';
      out_ << c;
      first = false;
    }
    out_ << '\n';
  }

  CsvWriter& cell(double x) { return raw(fmt_double(x)); }
  CsvWriter& cell(long long x) { return raw(std::to_string(x)); }
  CsvWriter& cell(unsigned long long x) { return raw(std::to_string(x)); }
  CsvWriter& cell(int x) { return raw(std::to_string(x)); }
  CsvWriter& cell(std::size_t x) { return raw(std::to_string(x)); }
  CsvWriter& cell(const std::string& s) { return raw(s); }

  /// Appends pre-formatted comma-separated text as further cells.
  CsvWriter& raw(const std::string& s) {
    if (!row_empty_) out_ << ',';
    out_ << s;
    row_empty_ = false;
    return *this;
  }

  void end_row() {
    out_ << '\n';
    row_empty_ = true;
  }

 private:
  std::ofstream out_;
  bool row_empty_ = true;
};

}  // namespace arl

#endif  // ARL_IO_HPP
