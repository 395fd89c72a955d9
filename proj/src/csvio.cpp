#include "koopcar/csvio.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "koopcar/binio.hpp"

namespace koopcar {

CsvWriter::CsvWriter(const std::string& path) : out_(path), path_(path) {
  if (!out_) throw IoError("cannot open for writing: " + path);
}

std::string CsvWriter::format(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void CsvWriter::header(std::initializer_list<const char*> names) {
  bool first = true;
  for (const char* n : names) {
    if (!first) out_ << ',';
    out_ << n;
    first = false;
  }
  out_ << '\n';
}

void CsvWriter::row(std::initializer_list<double> values) {
  bool first = true;
  for (double v : values) {
    if (!first) out_ << ',';
    out_ << format(v);
    first = false;
  }
  out_ << '\n';
}

void CsvWriter::row(const std::vector<Cell>& cells) {
  bool first = true;
  for (const Cell& c : cells) {
    if (!first) out_ << ',';
    if (std::holds_alternative<double>(c)) {
      out_ << format(std::get<double>(c));
    } else {
      out_ << std::get<std::string>(c);
    }
    first = false;
  }
  out_ << '\n';
}

CsvTable CsvTable::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

void CsvTable::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out << ',';
    out << header[i];
  }
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  }
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

double CsvTable::number(std::size_t row, int col) const {
  return std::strtod(rows.at(row).at(static_cast<std::size_t>(col)).c_str(), nullptr);
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void Manifest::add_input(const std::string& path) {
  char hash[20];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a64_file(path)));
  lines_.push_back("input " + path + " fnv1a64=" + hash);
}

void Manifest::add_seed(const std::string& name, std::uint64_t seed) {
  lines_.push_back("seed " + name + " = " + std::to_string(seed));
}

void Manifest::add_output(const std::string& path) {
  char hash[20];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a64_file(path)));
  lines_.push_back("output " + path + " fnv1a64=" + hash);
}

void Manifest::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const auto& l : lines_) out << l << '\n';
}

}  // namespace koopcar
