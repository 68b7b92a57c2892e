#pragma once

// Minimal CSV reading used by the ingest and file-format code. Fields are
// plain comma separated values; quoting is not part of any format we read.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "evcharge/error.hpp"

namespace evcharge::csv {

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r'))
      f.remove_suffix(1);
  }
  return out;
}

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path.string()), in_(path) {
    if (!in_) throw ParseError(path_, 0, "cannot open file");
  }

  // Reads the header and checks it equals `expected` (prefix match when
  // allow_extra is set).
  std::vector<std::string> header(const std::vector<std::string>& expected,
                                  bool allow_extra = false) {
    std::string line;
    if (!next_line(line)) throw ParseError(path_, 1, "missing header");
    auto fields = split(line);
    std::vector<std::string> names(fields.begin(), fields.end());
    bool ok = allow_extra ? names.size() >= expected.size() : names.size() == expected.size();
    for (std::size_t i = 0; ok && i < expected.size(); ++i) ok = names[i] == expected[i];
    if (!ok) {
      std::string want;
      for (const auto& e : expected) want += (want.empty() ? "" : ",") + e;
      throw ParseError(path_, line_no_, "expected header '" + want + "'");
    }
    return names;
  }

  bool next_row(std::vector<std::string_view>& fields) {
    while (next_line(current_)) {
      if (current_.empty() || current_ == "\r") continue;
      fields = split(current_);
      return true;
    }
    return false;
  }

  long line() const { return line_no_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, line_no_, what); }

  double to_double(std::string_view f, const char* name) const {
    double v = 0.0;
    auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || p != f.data() + f.size())
      fail(std::string("bad number in column ") + name + ": '" + std::string(f) + "'");
    return v;
  }

  long long to_int(std::string_view f, const char* name) const {
    long long v = 0;
    auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || p != f.data() + f.size())
      fail(std::string("bad integer in column ") + name + ": '" + std::string(f) + "'");
    return v;
  }

 private:
  bool next_line(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  std::string path_;
  std::ifstream in_;
  std::string current_;
  long line_no_ = 0;
};

}  // namespace evcharge::csv
