#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace avnav {

// Error with a machine-readable kind; the CLI turns these into JSON on stderr.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

inline Error config_error(const std::string& m) { return {"config", m}; }
inline Error input_error(const std::string& m) { return {"input", m}; }
inline Error sampling_error(const std::string& m) { return {"sampling", m}; }
inline Error training_error(const std::string& m) { return {"training", m}; }
inline Error parse_error(const std::string& m) { return {"parse", m}; }
inline Error usage_error(const std::string& m) { return {"usage", m}; }
inline Error io_error(const std::string& m) { return {"io", m}; }

using Rng = std::mt19937_64;

// splitmix64 finalizer; derives independent per-episode / per-worker streams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

}  // namespace avnav
