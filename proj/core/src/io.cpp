#include "marca/io.hpp"

#include <cstdio>
#include <fstream>

#include "marca/common.hpp"

namespace marca::io {

namespace fs = std::filesystem;

void atomic_write(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    require(os.good(), "atomic_write: cannot open " + tmp.string());
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    require(os.good(), "atomic_write: short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "read_file: cannot open " + path.string());
  std::string out((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return out;
}

bool file_exists(const fs::path& path) { return fs::exists(path); }

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : cols_(header.size()) {
  require(cols_ > 0, "CsvWriter: empty header");
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) buf_ += ',';
    buf_ += header[i];
  }
  buf_ += '\n';
}

void CsvWriter::add_row(const std::vector<std::string>& cells) {
  require(cells.size() == cols_, "CsvWriter: row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) buf_ += ',';
    buf_ += cells[i];
  }
  buf_ += '\n';
  ++rows_;
}

std::uint64_t hash_file(const fs::path& path) { return fnv1a64(read_file(path)); }

}  // namespace marca::io
