#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace trafficguard {

// Invalid configuration or usage. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent or malformed data (shape mismatch, empty input, corrupt file).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  IoError(const std::filesystem::path& path, const std::string& what)
      : std::runtime_error(path.string() + ": " + what), path_(path) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Independent random streams derived from one scenario seed.
enum class RngStream : std::uint64_t {
  kArrivals = 1,
  kRouting = 2,
  kAttacks = 3,
  kSplit = 4,
  kSmote = 5,
  kInit = 6,
  kShuffle = 7,
  kLime = 8,
  kShap = 9,
};

// SplitMix64 finalizer; used to decorrelate stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, RngStream stream) {
  return Rng(mix_seed(seed, static_cast<std::uint64_t>(stream)));
}

// Uniform double in [0, 1) built from 53 random bits. Unlike
// std::uniform_real_distribution the result is identical across standard
// libraries.
double uniform01(Rng& rng);

// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);

// Fisher-Yates with uniform_index; portable across standard libraries.
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    std::swap(items[i - 1], items[j]);
  }
}

// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace trafficguard
