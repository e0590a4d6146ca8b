#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace forge {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(std::string_view data);
std::string to_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view data);

/// Incremental SHA-256 for large or streamed inputs.
class Sha256Builder {
 public:
  Sha256Builder();
  ~Sha256Builder();
  Sha256Builder(const Sha256Builder&) = delete;
  Sha256Builder& operator=(const Sha256Builder&) = delete;

  void update(std::string_view data);
  Sha256 finish();

 private:
  void* ctx_;
};

/// Seeded 64-bit string hash (FNV-1a folded through a splitmix finalizer).
/// Stable across platforms and releases; used for bucketing and seed derivation.
std::uint64_t stable_hash64(std::string_view data, std::uint64_t seed = 0);

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace forge
