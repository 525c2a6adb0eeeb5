#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pcnet::csv {

std::vector<std::string_view> split(std::string_view line, char sep = ',');

/// Shortest decimal form that parses back to the same double.
std::string format(double v);

/// Header-driven reader for the comma-separated files used throughout the
/// toolkit. No quoting: cells never contain commas.
class Reader {
 public:
  explicit Reader(const std::filesystem::path& path);

  /// Throws SchemaError naming every column in `names` that the header lacks.
  void require(const std::vector<std::string>& names) const;
  bool has(const std::string& name) const { return index_.contains(name); }

  /// Advances to the next non-blank row; false at end of file.
  bool next();

  std::size_t line() const { return line_no_; }
  std::string_view cell(const std::string& name) const;
  std::string_view cell_or_empty(const std::string& name) const;

  double number(const std::string& name) const;
  std::optional<double> optional_number(const std::string& name) const;
  std::int64_t integer(const std::string& name) const;

  [[noreturn]] void fail(const std::string& what) const;

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::string current_;
  std::vector<std::string_view> cells_;
  std::size_t line_no_ = 0;
};

/// Opens `path` for writing, creating parent directories; throws IoError.
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace pcnet::csv
