#include "pssl/csv.hpp"

#include "pssl/common.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace pssl::csv {

std::string format(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format(long v) { return std::to_string(v); }
std::string format(int v) { return std::to_string(v); }
std::string format(std::size_t v) { return std::to_string(v); }

Table::Table(std::vector<std::string> header) : header_(std::move(header)) {
  require(!header_.empty(), "csv: empty header");
}

void Table::add(std::vector<std::string> row) {
  require(row.size() == header_.size(), "csv: row width does not match header");
  rows_.push_back(std::move(row));
}

std::string Table::str() const {
  std::string out;
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

void Table::write(const std::filesystem::path& path) const { write_file_atomic(path, str()); }

Table read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty csv");
  Table t(split(line));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header().size()) throw IoError(path.string() + ": ragged csv row");
    t.add(std::move(cells));
  }
  return t;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

}  // namespace pssl::csv
