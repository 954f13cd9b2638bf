#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vguard {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad flags, bad config file, unknown keys.  CLI exit status 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A required input artifact (corpus, manifest, report, ...) is absent
// or unreadable.  CLI exit status 2.
class MissingInputError : public Error {
 public:
  using Error::Error;
};

// A stage started but could not finish.  CLI exit status 3.
class StageError : public Error {
 public:
  using Error::Error;
};

// FNV-1a, used for stage fingerprints and RNG stream derivation.
inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

}  // namespace vguard
