#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace flagcns {

// Error taxonomy; the CLI maps these to exit codes (config 2, transport 3,
// numeric 4).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : ConfigError {
  using ConfigError::ConfigError;
};
struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ProtocolError : TransportError {
  using TransportError::TransportError;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

// splitmix64 finalizer; also used to derive independent seed streams.
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  uint64_t s = mix64(base ^ 0x6a09e667f3bcc909ull);
  s = mix64(s ^ mix64(a));
  s = mix64(s ^ mix64(b + 0x3c6ef372fe94f82bull));
  s = mix64(s ^ mix64(c + 0xa54ff53a5f1d36f1ull));
  return s;
}

}  // namespace flagcns
