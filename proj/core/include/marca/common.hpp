#pragma once

// Shared plumbing: deterministic RNG streams, seed derivation, content
// hashing, and bit-exact double<->hex encoding for checkpoints/manifests.

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace marca {

// All reproducibility contracts in this project reduce to: same seed, same
// byte stream. std::mt19937_64 output is fully specified by the standard;
// the distribution transforms below are hand-rolled because the standard
// library's distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1) with 53-bit resolution
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t uniform_index(std::uint64_t n);

  // standard normal via Box-Muller (polar form rejected: loop count varies)
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  std::string save_state() const;
  void restore_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64-based stream derivation: children of a master seed are
// decorrelated and order-independent.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

// FNV-1a 64-bit, used for dataset/config content hashes in manifests.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64(std::string_view s);
std::string hash_hex(std::uint64_t h);

// Bit-exact double encoding (16 lowercase hex chars of the IEEE-754 bits).
std::string double_to_hex(double v);
double hex_to_double(std::string_view s);
std::string doubles_to_hex(std::span<const double> v);
std::vector<double> hex_to_doubles(std::string_view s);

// Uniform error type for contract violations; CLI maps these to error JSON.
struct MarcaError : std::runtime_error {
  explicit MarcaError(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw MarcaError(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

}  // namespace marca
