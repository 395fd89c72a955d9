#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <string>
#include <variant>
#include <vector>

namespace koopcar {

/// CSV writer with float formatting pinned to 17 significant digits so that
/// parse -> re-emit is byte-identical.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);

  void header(std::initializer_list<const char*> names);
  void row(std::initializer_list<double> values);

  // Mixed row: doubles and verbatim strings (for status columns).
  using Cell = std::variant<double, std::string>;
  void row(const std::vector<Cell>& cells);

  static std::string format(double v);

 private:
  std::ofstream out_;
  std::string path_;
};

/// Parsed CSV: a header plus cells kept as raw strings (numeric columns are
/// converted on access, keeping non-numeric columns intact for re-emission).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  static CsvTable read(const std::string& path);
  void write(const std::string& path) const;

  int column(const std::string& name) const;  // -1 when absent
  double number(std::size_t row, int col) const;
};

std::uint64_t fnv1a64_file(const std::string& path);

/// Records inputs, seeds and output content hashes of one CLI invocation.
class Manifest {
 public:
  void add_input(const std::string& path);
  void add_seed(const std::string& name, std::uint64_t seed);
  void add_output(const std::string& path);
  void write(const std::string& path) const;

 private:
  std::vector<std::string> lines_;
};

}  // namespace koopcar
