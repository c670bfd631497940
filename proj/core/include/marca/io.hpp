#pragma once

// File IO helpers: atomic writes (temp + rename), whole-file reads, a
// small CSV writer with fixed row discipline, and manifest emission.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace marca::io {

// write-temp-then-rename; parent directories created on demand
void atomic_write(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);
bool file_exists(const std::filesystem::path& path);

// %.17g round-trips doubles through text exactly
std::string format_double(double v);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  void add_row(const std::vector<std::string>& cells);
  const std::string& content() const { return buf_; }
  std::size_t rows() const { return rows_; }
  void write(const std::filesystem::path& path) const { atomic_write(path, buf_); }

 private:
  std::size_t cols_;
  std::size_t rows_ = 0;
  std::string buf_;
};

std::uint64_t hash_file(const std::filesystem::path& path);

}  // namespace marca::io
