#pragma once

#include <charconv>
#include <cstdint>
#include <string>

namespace tabhash {

// Locale-free shortest form with at most 17 significant digits.
inline std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t x) {
  char buf[17];
  const auto r = std::to_chars(buf, buf + sizeof buf, x, 16);
  return std::string(16 - (r.ptr - buf), '0') + std::string(buf, r.ptr);
}

}  // namespace tabhash
