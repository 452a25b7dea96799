#pragma once

// CSV output: comma-separated, header row, '.' decimal, LF line endings.

#include <filesystem>
#include <string>
#include <vector>

namespace pssl::csv {

// Shortest text that reads back to the same double; NaN -> "NA".
std::string format(double v);
std::string format(long v);
std::string format(int v);
std::string format(std::size_t v);

class Table {
 public:
  explicit Table(std::vector<std::string> header);

  void add(std::vector<std::string> row);
  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  std::string str() const;
  // Writes through a temporary file and a rename.
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Minimal reader for files written by Table (no quoting).
Table read(const std::filesystem::path& path);

// Atomic whole-file write shared by the run directory code.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace pssl::csv
