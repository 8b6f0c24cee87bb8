#include "fedse/wire.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "fedse/digest.hpp"
#include "fedse/errors.hpp"

namespace fedse::wire {

namespace {

constexpr std::size_t kPrelude = 4 + 2 + 1 + 4 + 4 + 2 + 4 + 2;
constexpr std::size_t kLayerDescriptor = 2 + 4 + 4;
constexpr std::size_t kCrc = 4;
constexpr std::size_t kSuccessCount = 4;

class Writer {
 public:
  explicit Writer(std::size_t reserve) { out_.reserve(reserve); }

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }

  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n)
      throw WireError(WireError::Kind::length, std::string("wire: truncated message at ") + what);
  }
  std::uint64_t le(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(le(1, what)); }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(le(2, what)); }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(le(4, what)); }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  void skip(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

float narrow(double v) {
  const float f = static_cast<float>(v);
  if (!std::isfinite(f)) throw NumericalError("wire: value not representable as f32");
  return f;
}

// Parsed structure of a message; tensors are referenced by offset.
struct Parsed {
  Metadata meta;
  std::uint16_t rank = 0;
  float alpha = 0.0f;
  std::vector<nn::LayerShape> schema;
  std::vector<std::size_t> a_offset, b_offset;
  std::vector<Field> fields;
};

Parsed parse(std::span<const std::uint8_t> bytes) {
  Parsed p;
  Reader r(bytes);
  auto field = [&](std::string name, Field::Kind kind, std::size_t start) {
    p.fields.push_back({std::move(name), kind, start, r.pos() - start});
  };

  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw WireError(WireError::Kind::format, "wire: bad magic");
  r.skip(4);
  field("magic", Field::Kind::magic, 0);

  std::size_t at = r.pos();
  const auto version = r.u16("version");
  if (version != kVersion)
    throw WireError(WireError::Kind::version,
                    "wire: unsupported version " + std::to_string(version));
  field("version", Field::Kind::scalar, at);

  at = r.pos();
  const auto type = r.u8("msg_type");
  if (type > 1) throw WireError(WireError::Kind::format, "wire: unknown msg_type");
  p.meta.type = static_cast<MessageType>(type);
  field("msg_type", Field::Kind::scalar, at);

  at = r.pos();
  p.meta.round = r.u32("round");
  field("round", Field::Kind::scalar, at);
  at = r.pos();
  p.meta.client_id = r.u32("client_id");
  field("client_id", Field::Kind::scalar, at);
  at = r.pos();
  p.rank = r.u16("rank");
  if (p.rank == 0) throw WireError(WireError::Kind::format, "wire: rank 0");
  field("rank", Field::Kind::scalar, at);
  at = r.pos();
  p.alpha = r.f32("alpha");
  if (!std::isfinite(p.alpha) || p.alpha <= 0.0f)
    throw WireError(WireError::Kind::format, "wire: alpha must be positive");
  field("alpha", Field::Kind::scalar, at);
  at = r.pos();
  const auto n_layers = r.u16("n_layers");
  field("n_layers", Field::Kind::scalar, at);

  for (std::uint16_t l = 0; l < n_layers; ++l) {
    const std::string prefix = "layer[" + std::to_string(l) + "].";
    at = r.pos();
    const auto layer_id = r.u16("layer_id");
    if (layer_id != l) throw WireError(WireError::Kind::format, "wire: layer ids not contiguous");
    field(prefix + "layer_id", Field::Kind::scalar, at);
    at = r.pos();
    const std::size_t d_out = r.u32("d_out");
    field(prefix + "d_out", Field::Kind::scalar, at);
    at = r.pos();
    const std::size_t d_in = r.u32("d_in");
    field(prefix + "d_in", Field::Kind::scalar, at);
    if (d_out == 0 || d_in == 0) throw WireError(WireError::Kind::format, "wire: zero dimension");

    // Dimensions come from untrusted bytes; compare against what is left
    // before multiplying anything large.
    const std::size_t a_bytes = 4 * static_cast<std::size_t>(p.rank) * d_in;
    const std::size_t b_bytes = 4 * static_cast<std::size_t>(p.rank) * d_out;
    r.need(a_bytes, "A");
    p.a_offset.push_back(r.pos());
    at = r.pos();
    r.skip(a_bytes);
    field(prefix + "A", Field::Kind::tensor, at);
    r.need(b_bytes, "B");
    p.b_offset.push_back(r.pos());
    at = r.pos();
    r.skip(b_bytes);
    field(prefix + "B", Field::Kind::tensor, at);
    p.schema.push_back({d_out, d_in});
  }

  if (p.meta.type == MessageType::upload) {
    at = r.pos();
    p.meta.success_count = r.u32("success_count");
    field("success_count", Field::Kind::scalar, at);
  }
  r.need(kCrc, "checksum");
  if (r.remaining() != kCrc)
    throw WireError(WireError::Kind::length, "wire: trailing bytes after checksum");
  const std::size_t crc_at = r.pos();
  const auto stored = r.u32("checksum");
  field("checksum", Field::Kind::checksum, crc_at);
  if (stored != crc32(bytes.first(crc_at)))
    throw WireError(WireError::Kind::corruption, "wire: checksum mismatch");
  return p;
}

void read_tensor(std::span<const std::uint8_t> bytes, std::size_t offset, nn::Matrix& m) {
  Reader r(bytes.subspan(offset));
  for (double& v : m.data()) {
    const float f = r.f32("tensor");
    if (!std::isfinite(f)) throw WireError(WireError::Kind::format, "wire: non-finite entry");
    v = static_cast<double>(f);
  }
}

}  // namespace

std::size_t header_bytes(std::size_t n_layers, MessageType type) {
  return kPrelude + kLayerDescriptor * n_layers +
         (type == MessageType::upload ? kSuccessCount : 0) + kCrc;
}

std::size_t payload_bytes(std::span<const nn::LayerShape> schema, std::size_t rank) {
  std::size_t dims = 0;
  for (const auto& s : schema) dims += s.d_in + s.d_out;
  return 4 * rank * dims;
}

std::size_t message_size(std::span<const nn::LayerShape> schema, std::size_t rank,
                         MessageType type) {
  return header_bytes(schema.size(), type) + payload_bytes(schema, rank);
}

std::vector<std::uint8_t> encode_adapter(const nn::LoraAdapter& adapter, const Metadata& meta) {
  if (adapter.rank() < 1 || adapter.rank() > std::numeric_limits<std::uint16_t>::max())
    throw ContractViolation("encode_adapter: rank out of range");
  if (adapter.layers().size() > std::numeric_limits<std::uint16_t>::max())
    throw ContractViolation("encode_adapter: too many layers");
  if (meta.type == MessageType::broadcast && (meta.client_id != 0 || meta.success_count != 0))
    throw ContractViolation("encode_adapter: broadcasts carry no client id or count");
  const auto schema = adapter.schema();
  Writer w(message_size(schema, adapter.rank(), meta.type));
  w.raw(kMagic, 4);
  w.u16(kVersion);
  w.u8(static_cast<std::uint8_t>(meta.type));
  w.u32(meta.round);
  w.u32(meta.client_id);
  w.u16(static_cast<std::uint16_t>(adapter.rank()));
  w.f32(narrow(adapter.alpha()));
  w.u16(static_cast<std::uint16_t>(adapter.layers().size()));
  for (std::size_t l = 0; l < adapter.layers().size(); ++l) {
    w.u16(static_cast<std::uint16_t>(l));
    w.u32(static_cast<std::uint32_t>(schema[l].d_out));
    w.u32(static_cast<std::uint32_t>(schema[l].d_in));
    for (double v : adapter.layers()[l].a.data()) w.f32(narrow(v));
    for (double v : adapter.layers()[l].b.data()) w.f32(narrow(v));
  }
  if (meta.type == MessageType::upload) w.u32(meta.success_count);
  w.u32(crc32(w.bytes()));
  return std::move(w.bytes());
}

std::vector<std::uint8_t> encode_broadcast(const nn::LoraAdapter& adapter, std::uint32_t round) {
  return encode_adapter(adapter, {MessageType::broadcast, round, 0, 0});
}

std::vector<std::uint8_t> encode_upload(const nn::LoraAdapter& adapter, std::uint32_t round,
                                        std::uint32_t client_id, std::uint32_t success_count) {
  return encode_adapter(adapter, {MessageType::upload, round, client_id, success_count});
}

Message decode_adapter(std::span<const std::uint8_t> bytes) {
  const Parsed p = parse(bytes);
  auto adapter = nn::LoraAdapter::zeros(p.schema, p.rank, static_cast<double>(p.alpha));
  for (std::size_t l = 0; l < p.schema.size(); ++l) {
    read_tensor(bytes, p.a_offset[l], adapter.layers()[l].a);
    read_tensor(bytes, p.b_offset[l], adapter.layers()[l].b);
  }
  return {std::move(adapter), p.meta};
}

std::vector<Field> describe(std::span<const std::uint8_t> bytes) { return parse(bytes).fields; }

nn::LoraAdapter quantize(const nn::LoraAdapter& adapter) {
  nn::LoraAdapter out = adapter;
  for (auto& pair : out.layers()) {
    for (double& v : pair.a.data()) v = static_cast<double>(narrow(v));
    for (double& v : pair.b.data()) v = static_cast<double>(narrow(v));
  }
  return nn::LoraAdapter(out.rank(), static_cast<double>(narrow(out.alpha())),
                         std::move(out.layers()));
}

}  // namespace fedse::wire
