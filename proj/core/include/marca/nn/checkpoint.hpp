#pragma once

// Self-describing checkpoint container: named parameter arrays with
// shapes, metadata strings, and RNG stream states. Doubles are stored as
// hex-encoded IEEE-754 bits so save→load round-trips bit-exactly.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace marca::nn {

class Checkpoint {
 public:
  struct Array {
    std::vector<std::size_t> shape;
    std::vector<double> data;
  };

  void put_array(const std::string& name, std::vector<std::size_t> shape,
                 std::vector<double> data);
  const Array& array(const std::string& name) const;
  bool has_array(const std::string& name) const { return arrays_.count(name) > 0; }

  void put_meta(const std::string& key, const std::string& value);
  std::string meta(const std::string& key) const;
  bool has_meta(const std::string& key) const { return meta_.count(key) > 0; }

  void put_int(const std::string& key, std::int64_t v);
  std::int64_t get_int(const std::string& key) const;

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& json_text);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  const std::map<std::string, Array>& arrays() const { return arrays_; }

 private:
  std::map<std::string, Array> arrays_;
  std::map<std::string, std::string> meta_;
  std::map<std::string, std::int64_t> ints_;
};

}  // namespace marca::nn
