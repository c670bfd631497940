#include "marca/common.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

namespace marca {

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  require(n > 0, "uniform_index: empty range");
  // rejection sampling to avoid modulo bias
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Box-Muller; u1 nudged away from 0 so log stays finite.
  double u1 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

std::string Rng::save_state() const {
  std::ostringstream os;
  os << engine_;
  os << ' ' << (have_spare_ ? 1 : 0) << ' ' << double_to_hex(spare_);
  return os.str();
}

void Rng::restore_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  int flag = 0;
  std::string hex;
  is >> flag >> hex;
  require(!is.fail(), "Rng::restore_state: malformed state string");
  have_spare_ = flag != 0;
  spare_ = hex_to_double(hex);
}

namespace {
std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t x = base ^ (0xd1b54a32d192ed03ULL * (stream + 1));
  std::uint64_t a = splitmix64(x);
  std::uint64_t b = splitmix64(x);
  return a ^ (b << 1);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  return derive_seed(base, fnv1a64(tag));
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(s.data()), s.size()));
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

namespace {
constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  fail("hex_to_double: invalid hex digit");
}
}  // namespace

std::string double_to_hex(double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHexDigits[bits & 0xf];
    bits >>= 4;
  }
  return out;
}

double hex_to_double(std::string_view s) {
  require(s.size() == 16, "hex_to_double: need exactly 16 hex chars");
  std::uint64_t bits = 0;
  for (char c : s) bits = (bits << 4) | static_cast<std::uint64_t>(hex_value(c));
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

std::string doubles_to_hex(std::span<const double> v) {
  std::string out;
  out.reserve(v.size() * 16);
  for (double d : v) out += double_to_hex(d);
  return out;
}

std::vector<double> hex_to_doubles(std::string_view s) {
  require(s.size() % 16 == 0, "hex_to_doubles: length not a multiple of 16");
  std::vector<double> out(s.size() / 16);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = hex_to_double(s.substr(i * 16, 16));
  return out;
}

}  // namespace marca
