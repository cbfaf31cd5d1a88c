#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace irvuln {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

/// 64-bit FNV-1a; pass a previous result as `seed` to hash incrementally.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = kFnvOffset) {
  std::uint64_t h = seed;
  for (const char ch : bytes) {
    h ^= static_cast<unsigned char>(ch);
    h *= kFnvPrime;
  }
  return h;
}

/// 16 lowercase hex characters.
std::string digest_hex(std::uint64_t digest);

}  // namespace irvuln
