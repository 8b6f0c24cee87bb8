#include "fedse/digest.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdio>

namespace fedse {

Fnv1a64& Fnv1a64::bytes(std::span<const std::uint8_t> data) {
  for (std::uint8_t b : data) {
    state_ ^= b;
    state_ *= 0x100000001b3ULL;
  }
  return *this;
}

Fnv1a64& Fnv1a64::str(std::string_view s) {
  u64(s.size());
  for (char c : s) u8(static_cast<std::uint8_t>(c));
  return *this;
}

Fnv1a64& Fnv1a64::u8(std::uint8_t v) {
  state_ ^= v;
  state_ *= 0x100000001b3ULL;
  return *this;
}

Fnv1a64& Fnv1a64::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  return *this;
}

Fnv1a64& Fnv1a64::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  return *this;
}

Fnv1a64& Fnv1a64::f64(double v) { return u64(std::bit_cast<std::uint64_t>(v)); }

std::uint32_t crc32(std::span<const std::uint8_t> data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes a uInt length; feed in chunks for very large buffers.
  std::size_t offset = 0;
  while (offset < data.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(data.size() - offset, 1u << 30));
    crc = ::crc32(crc, data.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace fedse
