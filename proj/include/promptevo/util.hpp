#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace promptevo {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool contains(std::string_view haystack, std::string_view needle);

// FNV-1a, used for prompt ids and dataset fingerprints.
inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t h = kFnvOffset) {
  for (unsigned char c : data) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64_mix(std::uint64_t v, std::uint64_t h) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffu;
    h *= kFnvPrime;
  }
  return h;
}

// 16 lowercase hex chars.
std::string to_hex(std::uint64_t v);

using Rng = std::mt19937_64;

// Uniform draw in [0,1) built directly from the engine output so results do
// not depend on the standard library's distribution implementation.
inline double uniform_double(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t uniform_index(Rng& rng, std::size_t n);

// k distinct indices from [0,n), in draw order.
std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n,
                                        std::size_t k);

std::string rng_to_string(const Rng& rng);
Rng rng_from_string(const std::string& s);

std::string read_file(const std::filesystem::path& path);
// Write-temp-then-rename so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content);

}  // namespace promptevo
