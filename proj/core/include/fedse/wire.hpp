#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedse/nn.hpp"

namespace fedse::wire {

// Little-endian layout:
//
//   "FDSE" | version u16 | msg_type u8 | round u32 | client_id u32 |
//   rank u16 | alpha f32 | n_layers u16 |
//   n_layers × { layer_id u16 | d_out u32 | d_in u32 | A f32[] | B f32[] } |
//   success_count u32 (upload only) | crc32 u32
//
// A is rank × d_in and B is d_out × rank, both row-major. The CRC covers
// every preceding byte.

inline constexpr std::uint16_t kVersion = 1;
inline constexpr char kMagic[4] = {'F', 'D', 'S', 'E'};

enum class MessageType : std::uint8_t { broadcast = 0, upload = 1 };

class WireError : public std::runtime_error {
 public:
  enum class Kind { format, corruption, version, length };

  WireError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct Metadata {
  MessageType type = MessageType::upload;
  std::uint32_t round = 0;
  std::uint32_t client_id = 0;      // 0 for broadcasts
  std::uint32_t success_count = 0;  // 0 for broadcasts
};

struct Message {
  nn::LoraAdapter adapter;
  Metadata meta;
};

std::vector<std::uint8_t> encode_adapter(const nn::LoraAdapter& adapter, const Metadata& meta);

std::vector<std::uint8_t> encode_broadcast(const nn::LoraAdapter& adapter, std::uint32_t round);
std::vector<std::uint8_t> encode_upload(const nn::LoraAdapter& adapter, std::uint32_t round,
                                        std::uint32_t client_id, std::uint32_t success_count);

/// Checks magic, then version, then structure and length, then the CRC.
/// Throws WireError on the first failure.
Message decode_adapter(std::span<const std::uint8_t> bytes);

/// Bytes outside the tensors: fixed prelude, per-layer descriptors, the
/// optional success count and the CRC.
std::size_t header_bytes(std::size_t n_layers, MessageType type);

/// 4 · rank · Σ (d_in + d_out).
std::size_t payload_bytes(std::span<const nn::LayerShape> schema, std::size_t rank);

std::size_t message_size(std::span<const nn::LayerShape> schema, std::size_t rank,
                         MessageType type);

/// One field of a parsed message, in wire order.
struct Field {
  enum class Kind { magic, scalar, tensor, checksum };
  std::string name;  // e.g. "round", "layer[1].A"
  Kind kind;
  std::size_t offset;
  std::size_t size;
};

/// Walks a message and lists every field it carries. The fields tile the
/// message exactly. Performs the same checks as decode_adapter.
std::vector<Field> describe(std::span<const std::uint8_t> bytes);

/// Round-trips every entry through f32, the precision the wire carries.
nn::LoraAdapter quantize(const nn::LoraAdapter& adapter);

}  // namespace fedse::wire
