#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace fedse {

/// Streaming 64-bit FNV-1a. Multi-byte values are fed little-endian so the
/// digest does not depend on host byte order.
class Fnv1a64 {
 public:
  Fnv1a64& bytes(std::span<const std::uint8_t> data);
  Fnv1a64& str(std::string_view s);
  Fnv1a64& u8(std::uint8_t v);
  Fnv1a64& u32(std::uint32_t v);
  Fnv1a64& u64(std::uint64_t v);
  Fnv1a64& f64(double v);

  std::uint64_t value() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

/// CRC-32 (IEEE 802.3, as used by zlib/PNG).
std::uint32_t crc32(std::span<const std::uint8_t> data);

/// 16 lowercase hex digits.
std::string to_hex(std::uint64_t v);

}  // namespace fedse
