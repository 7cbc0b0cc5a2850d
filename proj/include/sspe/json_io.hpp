#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sspe/error.hpp"

// Small helpers shared by the dataset, checkpoint and report writers. Output
// numbers are always printed with 17 significant digits so that every double
// survives a text round trip bit-for-bit; parsing goes through nlohmann::json.
namespace sspe::io {

using Json = nlohmann::json;

inline std::string real(double v) {
  if (!std::isfinite(v)) throw Error(ErrorCode::NumericalFailure, "refusing to serialize a non-finite number");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string quoted(const std::string& s) { return Json(s).dump(); }

template <typename Range>
std::string real_array(const Range& values) {
  std::string out = "[";
  bool first = true;
  for (double v : values) {
    if (!first) out += ',';
    out += real(v);
    first = false;
  }
  return out + "]";
}

// Minimal streaming object writer. Keys appear in insertion order, which keeps
// serialized files stable across runs.
class ObjectWriter {
 public:
  ObjectWriter& raw(const std::string& key, const std::string& json_value) {
    if (!body_.empty()) body_ += ',';
    body_ += quoted(key) + ':' + json_value;
    return *this;
  }
  ObjectWriter& num(const std::string& key, double v) { return raw(key, real(v)); }
  ObjectWriter& integer(const std::string& key, long long v) { return raw(key, std::to_string(v)); }
  ObjectWriter& str(const std::string& key, const std::string& v) { return raw(key, quoted(v)); }
  ObjectWriter& boolean(const std::string& key, bool v) { return raw(key, v ? "true" : "false"); }

  std::string done() const { return "{" + body_ + "}"; }

 private:
  std::string body_;
};

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

inline Json parse_json(const std::string& text, const std::string& where) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Parse, where + ": " + e.what());
  }
}

}  // namespace sspe::io
