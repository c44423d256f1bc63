#include "mmtraj/hash.hpp"

#include <cstdio>
#include <cstring>

namespace mmtraj {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::span<const double> values, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (double v : values) {
    unsigned char b[sizeof(double)];
    std::memcpy(b, &v, sizeof(double));
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(b), sizeof(b)), h);
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace mmtraj
