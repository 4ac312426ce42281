#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace compgraph {

// "%.9g": nine significant digits, exact round trip for 32-bit floats.
std::string format_number(double value);
// Shortest "%g" form used for thresholds in file names and columns.
std::string format_tau(double tau);

// Minimal reader for the comma-separated files this project writes (no
// quoting). Throws DataError on ragged rows or a header mismatch.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of `name` in the header; throws DataError if absent.
  std::size_t column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

double parse_double(std::string_view text);
float parse_float(std::string_view text);
long parse_long(std::string_view text);

// Writes `contents` to `path`, throwing DataError on failure.
void write_text_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace compgraph
