#pragma once

#include <cstdint>
#include <string_view>

namespace iflatcam {

/// Derives an independent sub-seed from a root seed and a component name.
///
/// sub_seed(root, name) = splitmix64(root XOR fnv1a64(name)). Every random
/// stream in the project is keyed this way ("mask", "stream", "weights",
/// "noise", ...), so each component can be reproduced on its own.
constexpr std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (char c : text) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t sub_seed(std::uint64_t root, std::string_view name) {
  return splitmix64(root ^ fnv1a64(name));
}

}  // namespace iflatcam
