#include "pcnet/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>

#include "pcnet/error.hpp"

namespace pcnet::csv {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string format(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return {buf.data(), res.ptr};
}

Reader::Reader(const std::filesystem::path& path) : path_(path), in_(path) {
  if (!in_) {
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  }
  std::string header;
  while (std::getline(in_, header)) {
    ++line_no_;
    if (!header.empty() && header.back() == '\r') header.pop_back();
    if (!header.empty()) break;
  }
  if (header.empty()) {
    throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no_) +
                                           ": empty file, expected a header row");
  }
  const auto names = split(header);
  for (std::size_t i = 0; i < names.size(); ++i) {
    index_.emplace(std::string(names[i]), i);
  }
}

void Reader::require(const std::vector<std::string>& names) const {
  std::string missing;
  for (const auto& n : names) {
    if (!has(n)) missing += (missing.empty() ? "" : ", ") + n;
  }
  if (!missing.empty()) {
    throw Error(ErrorCode::SchemaError, path_.string() + ": missing columns: " + missing);
  }
}

bool Reader::next() {
  while (std::getline(in_, current_)) {
    ++line_no_;
    if (!current_.empty() && current_.back() == '\r') current_.pop_back();
    if (current_.empty()) continue;
    cells_ = split(current_);
    if (cells_.size() != index_.size()) {
      fail("expected " + std::to_string(index_.size()) + " cells, found " +
           std::to_string(cells_.size()));
    }
    return true;
  }
  return false;
}

std::string_view Reader::cell(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) fail("no column '" + name + "'");
  return cells_[it->second];
}

std::string_view Reader::cell_or_empty(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? std::string_view{} : cells_[it->second];
}

double Reader::number(const std::string& name) const {
  const auto v = optional_number(name);
  if (!v) fail("column '" + name + "' is empty");
  return *v;
}

std::optional<double> Reader::optional_number(const std::string& name) const {
  const auto text = cell_or_empty(name);
  if (text.empty()) return std::nullopt;
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    // from_chars rejects a leading '+', and "nan"/"inf" should not appear.
    fail("column '" + name + "': not a number: '" + std::string(text) + "'");
  }
  if (!std::isfinite(v)) fail("column '" + name + "': non-finite value");
  return v;
}

std::int64_t Reader::integer(const std::string& name) const {
  const auto text = cell(name);
  std::int64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    fail("column '" + name + "': not an integer: '" + std::string(text) + "'");
  }
  return v;
}

void Reader::fail(const std::string& what) const {
  throw Error(ErrorCode::ParseError,
              path_.string() + ":" + std::to_string(line_no_) + ": " + what);
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

}  // namespace pcnet::csv
