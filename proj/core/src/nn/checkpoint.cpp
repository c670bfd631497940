#include "marca/nn/checkpoint.hpp"

#include <json.hpp>

#include "marca/common.hpp"
#include "marca/io.hpp"

namespace marca::nn {

using ordered_json = nlohmann::ordered_json;

void Checkpoint::put_array(const std::string& name, std::vector<std::size_t> shape,
                           std::vector<double> data) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  require(n == data.size(), "Checkpoint::put_array: shape/data mismatch for " + name);
  arrays_[name] = Array{std::move(shape), std::move(data)};
}

const Checkpoint::Array& Checkpoint::array(const std::string& name) const {
  auto it = arrays_.find(name);
  require(it != arrays_.end(), "Checkpoint: missing array " + name);
  return it->second;
}

void Checkpoint::put_meta(const std::string& key, const std::string& value) {
  meta_[key] = value;
}

std::string Checkpoint::meta(const std::string& key) const {
  auto it = meta_.find(key);
  require(it != meta_.end(), "Checkpoint: missing meta key " + key);
  return it->second;
}

void Checkpoint::put_int(const std::string& key, std::int64_t v) { ints_[key] = v; }

std::int64_t Checkpoint::get_int(const std::string& key) const {
  auto it = ints_.find(key);
  require(it != ints_.end(), "Checkpoint: missing int key " + key);
  return it->second;
}

std::string Checkpoint::serialize() const {
  ordered_json j;
  j["format"] = "marca-checkpoint";
  j["version"] = 1;
  ordered_json jm = ordered_json::object();
  for (const auto& [k, v] : meta_) jm[k] = v;
  j["meta"] = std::move(jm);
  ordered_json ji = ordered_json::object();
  for (const auto& [k, v] : ints_) ji[k] = v;
  j["ints"] = std::move(ji);
  ordered_json ja = ordered_json::object();
  for (const auto& [name, arr] : arrays_) {
    ordered_json a;
    a["shape"] = arr.shape;
    a["data"] = doubles_to_hex(arr.data);
    ja[name] = std::move(a);
  }
  j["arrays"] = std::move(ja);
  return j.dump();
}

Checkpoint Checkpoint::deserialize(const std::string& json_text) {
  ordered_json j = ordered_json::parse(json_text);
  require(j.value("format", "") == "marca-checkpoint", "Checkpoint: unrecognized container");
  Checkpoint c;
  for (auto& [k, v] : j.at("meta").items()) c.meta_[k] = v.get<std::string>();
  for (auto& [k, v] : j.at("ints").items()) c.ints_[k] = v.get<std::int64_t>();
  for (auto& [name, a] : j.at("arrays").items()) {
    Array arr;
    arr.shape = a.at("shape").get<std::vector<std::size_t>>();
    arr.data = hex_to_doubles(a.at("data").get<std::string>());
    std::size_t n = 1;
    for (std::size_t d : arr.shape) n *= d;
    require(n == arr.data.size(), "Checkpoint: corrupt array " + name);
    c.arrays_[name] = std::move(arr);
  }
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  io::atomic_write(path, serialize());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  return deserialize(io::read_file(path));
}

}  // namespace marca::nn
