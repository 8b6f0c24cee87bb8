#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <set>
#include <thread>

#include "fedse/digest.hpp"
#include "fedse/errors.hpp"
#include "fedse/transport.hpp"
#include "fedse/wire.hpp"
#include "support.hpp"

using namespace fedse;
using namespace fedse::wire;

namespace {

const std::vector<nn::LayerShape> kSchema{{16, 508}, {16, 16}, {66, 16}};

std::uint32_t le32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return b[at] | (b[at + 1] << 8) | (b[at + 2] << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}
std::uint16_t le16(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

WireError::Kind decode_error_kind(std::span<const std::uint8_t> bytes) {
  try {
    decode_adapter(bytes);
  } catch (const WireError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode accepted a bad message";
  return WireError::Kind::format;
}

}  // namespace

TEST(Crc32, KnownVector) {
  const std::string s = "123456789";
  EXPECT_EQ(crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}), 0xCBF43926u);
}

TEST(Wire, RoundTripEqualsQuantizedAdapter) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rank = 1 + rng.below(16);
    const auto a = test::random_adapter(kSchema, rank, 2.0 * static_cast<double>(rank), rng);
    const auto bytes = encode_upload(a, 7, 3, 11);
    const auto m = decode_adapter(bytes);
    EXPECT_EQ(m.adapter, quantize(a));
    EXPECT_EQ(m.meta.type, MessageType::upload);
    EXPECT_EQ(m.meta.round, 7u);
    EXPECT_EQ(m.meta.client_id, 3u);
    EXPECT_EQ(m.meta.success_count, 11u);
    // Already-quantized adapters survive bit-exactly, so a re-encode is identical.
    EXPECT_EQ(encode_upload(m.adapter, 7, 3, 11), bytes);
    EXPECT_EQ(quantize(quantize(a)), quantize(a));
  }
}

TEST(Wire, PreludeLayout) {
  Rng rng(2);
  const auto a = test::random_adapter(kSchema, 4, 8.0, rng);
  const auto b = encode_upload(a, 0x01020304, 9, 5);
  EXPECT_EQ(std::memcmp(b.data(), "FDSE", 4), 0);
  EXPECT_EQ(le16(b, 4), kVersion);
  EXPECT_EQ(b[6], 1);
  EXPECT_EQ(le32(b, 7), 0x01020304u);
  EXPECT_EQ(le32(b, 11), 9u);
  EXPECT_EQ(le16(b, 15), 4);
  float alpha;
  std::memcpy(&alpha, b.data() + 17, 4);
  EXPECT_EQ(alpha, 8.0f);
  EXPECT_EQ(le16(b, 21), 3);
  // First layer descriptor.
  EXPECT_EQ(le16(b, 23), 0);
  EXPECT_EQ(le32(b, 25), 16u);
  EXPECT_EQ(le32(b, 29), 508u);
  float a00;
  std::memcpy(&a00, b.data() + 33, 4);
  EXPECT_EQ(a00, static_cast<float>(a.layers()[0].a(0, 0)));
  EXPECT_EQ(le32(b, b.size() - 8), 5u);
  EXPECT_EQ(le32(b, b.size() - 4), crc32(std::span(b).first(b.size() - 4)));
}

TEST(Wire, SizesMatchTheCostModelByteForByte) {
  Rng rng(3);
  std::size_t dims = 0;
  for (const auto& s : kSchema) dims += s.d_in + s.d_out;
  for (std::size_t r : {1u, 2u, 4u, 8u, 16u}) {
    const auto a = test::random_adapter(kSchema, r, 16.0, rng);
    EXPECT_EQ(payload_bytes(kSchema, r), 4 * r * dims);
    EXPECT_EQ(encode_upload(a, 0, 1, 0).size(), 23 + 10 * 3 + 4 + 4 + 4 * r * dims);
    EXPECT_EQ(encode_broadcast(a, 0).size(), 23 + 10 * 3 + 4 + 4 * r * dims);
    EXPECT_EQ(encode_upload(a, 0, 1, 0).size(), message_size(kSchema, r, MessageType::upload));
    EXPECT_EQ(header_bytes(3, MessageType::upload), 23u + 30u + 8u);
  }
  for (std::size_t r : {2u, 4u, 8u}) EXPECT_EQ(payload_bytes(kSchema, 2 * r), 2 * payload_bytes(kSchema, r));
}

TEST(Wire, DecodeErrorOrder) {
  Rng rng(4);
  const auto good = encode_upload(test::random_adapter(kSchema, 2, 4.0, rng), 1, 1, 1);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  bad_magic[5] = 0x7f;  // also a bad version: magic is checked first
  EXPECT_EQ(decode_error_kind(bad_magic), WireError::Kind::format);

  auto bad_version = good;
  bad_version[4] = 2;
  EXPECT_EQ(decode_error_kind(bad_version), WireError::Kind::version);

  auto bad_type = good;
  bad_type[6] = 7;
  EXPECT_EQ(decode_error_kind(bad_type), WireError::Kind::format);

  auto trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(decode_error_kind(trailing), WireError::Kind::length);

  auto bad_crc = good;
  bad_crc.back() ^= 1;
  EXPECT_EQ(decode_error_kind(bad_crc), WireError::Kind::corruption);
}

TEST(Wire, EveryTruncationIsALengthError) {
  Rng rng(5);
  const std::vector<nn::LayerShape> small{{3, 4}, {2, 3}};
  const auto good = encode_upload(test::random_adapter(small, 2, 4.0, rng), 1, 1, 1);
  for (std::size_t n = 4; n < good.size(); ++n)
    EXPECT_EQ(decode_error_kind(std::span(good).first(n)), WireError::Kind::length) << n;
  EXPECT_THROW(decode_adapter(std::span(good).first(2)), WireError);
}

TEST(Wire, TensorBitFlipsAreCorruption) {
  Rng rng(6);
  const auto good = encode_upload(test::random_adapter(kSchema, 2, 4.0, rng), 1, 1, 1);
  const auto fields = describe(good);
  for (int trial = 0; trial < 300; ++trial) {
    const auto& f = fields[rng.below(fields.size())];
    auto bad = good;
    bad[f.offset + rng.below(f.size)] ^= static_cast<std::uint8_t>(1u << rng.below(8));
    // Any flip is rejected; flips in the payload or checksum are caught by the CRC.
    EXPECT_THROW(decode_adapter(bad), WireError);
    if (f.kind == Field::Kind::tensor || f.kind == Field::Kind::checksum) {
      EXPECT_EQ(decode_error_kind(bad), WireError::Kind::corruption) << f.name;
    }
  }
}

TEST(Wire, EncodeContractViolations) {
  Rng rng(7);
  auto a = test::random_adapter(kSchema, 2, 4.0, rng);
  EXPECT_THROW(encode_adapter(a, {MessageType::broadcast, 0, 4, 0}), ContractViolation);
  a.layers()[1].b(0, 0) = 1e300;
  EXPECT_THROW(encode_broadcast(a, 0), NumericalError);
  a.layers()[1].b(0, 0) = NAN;
  EXPECT_THROW(encode_broadcast(a, 0), NumericalError);
}

// Every byte of an upload belongs to a declared field; the only variable-size
// fields are adapter tensors and the rest are fixed-width scalars.
TEST(Privacy, UploadsCarryOnlyTensorsAndCounts) {
  Rng rng(8);
  const std::set<std::string> scalars{"version", "msg_type", "round", "client_id", "rank",
                                      "alpha", "n_layers", "success_count"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<nn::LayerShape> schema;
    const std::size_t layers = 1 + rng.below(4);
    for (std::size_t l = 0; l < layers; ++l) schema.push_back({1 + rng.below(20), 1 + rng.below(40)});
    const std::size_t rank = 1 + rng.below(8);
    const auto a = test::random_adapter(schema, rank, 2.0, rng);
    const auto bytes = encode_upload(a, static_cast<std::uint32_t>(rng.below(100)),
                                      static_cast<std::uint32_t>(rng.below(10)),
                                      static_cast<std::uint32_t>(rng.below(1000)));
    const auto fields = describe(bytes);
    std::size_t pos = 0, tensor_bytes = 0;
    for (const auto& f : fields) {
      EXPECT_EQ(f.offset, pos) << f.name;
      pos += f.size;
      switch (f.kind) {
        case Field::Kind::magic: EXPECT_EQ(f.size, 4u); break;
        case Field::Kind::checksum: EXPECT_EQ(f.size, 4u); break;
        case Field::Kind::tensor: {
          tensor_bytes += f.size;
          const bool ends_ab = f.name.ends_with("].A") || f.name.ends_with("].B");
          EXPECT_TRUE(f.name.starts_with("layer[") && ends_ab) << f.name;
          break;
        }
        case Field::Kind::scalar: {
          EXPECT_LE(f.size, 4u);
          const auto dot = f.name.find("].");
          const std::string base = dot == std::string::npos ? f.name : f.name.substr(dot + 2);
          EXPECT_TRUE(scalars.contains(base) || base == "layer_id" || base == "d_out" || base == "d_in")
              << f.name;
          break;
        }
      }
    }
    EXPECT_EQ(pos, bytes.size());
    EXPECT_EQ(tensor_bytes, payload_bytes(schema, rank));
    // Decoding yields adapter tensors and metadata and nothing else.
    const auto m = decode_adapter(bytes);
    EXPECT_EQ(m.adapter.schema(), schema);
    static_assert(sizeof(Metadata) <= 4 * sizeof(std::uint32_t));
  }
}

// --- transports ------------------------------------------------------------

namespace {

runtime::Bytes echo_task(std::size_t index, std::span<const std::uint8_t> broadcast) {
  runtime::Bytes out(broadcast.begin(), broadcast.end());
  out.push_back(static_cast<std::uint8_t>(index));
  return out;
}

std::vector<runtime::Bytes> sorted(std::vector<runtime::Bytes> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST(Transport, InProcessSerialAndParallelAgree) {
  const runtime::Bytes broadcast{1, 2, 3};
  runtime::InProcessTransport serial(false), parallel(true);
  const auto a = serial.exchange(broadcast, 5, echo_task);
  const auto b = parallel.exchange(broadcast, 5, echo_task);
  ASSERT_EQ(a.size(), 5u);
  EXPECT_EQ(a[4], (runtime::Bytes{1, 2, 3, 4}));
  EXPECT_EQ(sorted(a), sorted(b));
}

TEST(Transport, TcpLoopbackDeliversTheSameBytes) {
  runtime::TcpLoopbackTransport tcp;
  EXPECT_NE(tcp.port(), 0);
  Rng rng(9);
  runtime::Bytes broadcast(200000);
  for (auto& v : broadcast) v = static_cast<std::uint8_t>(rng.below(256));
  runtime::InProcessTransport local;
  for (int round = 0; round < 3; ++round) {
    broadcast[0] = static_cast<std::uint8_t>(round);
    EXPECT_EQ(sorted(tcp.exchange(broadcast, 4, echo_task)), sorted(local.exchange(broadcast, 4, echo_task)));
  }
}

TEST(Transport, ClientExceptionsPropagate) {
  const auto failing = [](std::size_t index, std::span<const std::uint8_t>) -> runtime::Bytes {
    if (index == 1) throw std::runtime_error("client 1 failed");
    return {1};
  };
  runtime::InProcessTransport serial(false), parallel(true);
  EXPECT_THROW(serial.exchange({0}, 3, failing), std::runtime_error);
  EXPECT_THROW(parallel.exchange({0}, 3, failing), std::runtime_error);
  runtime::TcpLoopbackTransport tcp(0, std::chrono::seconds(10));
  EXPECT_THROW(tcp.exchange({0}, 3, failing), std::runtime_error);
  // The transport stays usable after a failed round.
  EXPECT_EQ(tcp.exchange({7}, 2, echo_task).size(), 2u);
}
