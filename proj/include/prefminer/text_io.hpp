#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace prefminer {

// Splits on a single-character delimiter. Empty fields are preserved.
std::vector<std::string_view> split_fields(std::string_view line, char delim);

// Tab when the header contains one, comma otherwise.
char detect_delimiter(std::string_view header);

std::string_view trim(std::string_view s);

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int64(std::string_view s);

// Shortest text that reads back to the same double ("inf"/"-inf"/"nan" for non-finite).
std::string format_double(double v);

std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);

// Header-driven delimited table: comment lines ('#') and blank lines are skipped.
class DelimitedTable {
 public:
  static DelimitedTable read(const std::filesystem::path& path);

  const std::vector<std::string>& columns() const { return columns_; }
  std::optional<std::size_t> column(std::string_view name) const;
  std::size_t require_column(std::string_view name) const;

  std::size_t rows() const { return rows_.size(); }
  const std::vector<std::string>& row(std::size_t i) const { return rows_[i]; }
  // 1-based line number in the source file for row i.
  std::size_t line_number(std::size_t i) const { return line_numbers_[i]; }
  char delimiter() const { return delim_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  char delim_ = '\t';
  std::vector<std::string> columns_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::size_t> line_numbers_;
};

}  // namespace prefminer
