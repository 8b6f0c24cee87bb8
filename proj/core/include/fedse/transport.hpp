#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace fedse::runtime {

using Bytes = std::vector<std::uint8_t>;

/// Client side of one round: receives the encoded broadcast and returns the
/// encoded upload. `index` is the client's position in the plan.
using ClientTask = std::function<Bytes(std::size_t index, std::span<const std::uint8_t> broadcast)>;

/// Moves one broadcast to K clients and their uploads back. Uploads are
/// returned in arrival order; the server identifies them by content.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::vector<Bytes> exchange(const Bytes& broadcast, std::size_t k,
                                      const ClientTask& task) = 0;
};

/// Calls each task directly, optionally one thread per client.
class InProcessTransport final : public Transport {
 public:
  explicit InProcessTransport(bool parallel = false) : parallel_(parallel) {}
  std::vector<Bytes> exchange(const Bytes& broadcast, std::size_t k,
                              const ClientTask& task) override;

 private:
  bool parallel_;
};

/// Real sockets on 127.0.0.1. The server keeps one listening socket; every
/// round each client thread opens its own connection, reads the broadcast
/// frame, writes its upload frame and disconnects. Frames are a u32
/// little-endian length followed by the message.
class TcpLoopbackTransport final : public Transport {
 public:
  /// Port 0 picks an ephemeral port.
  explicit TcpLoopbackTransport(std::uint16_t port = 0,
                                std::chrono::milliseconds timeout = std::chrono::seconds(60));
  ~TcpLoopbackTransport() override;
  TcpLoopbackTransport(const TcpLoopbackTransport&) = delete;
  TcpLoopbackTransport& operator=(const TcpLoopbackTransport&) = delete;

  std::uint16_t port() const { return port_; }

  std::vector<Bytes> exchange(const Bytes& broadcast, std::size_t k,
                              const ClientTask& task) override;

 private:
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::chrono::milliseconds timeout_;
};

/// Largest frame either side accepts.
inline constexpr std::uint32_t kMaxFrameBytes = 64u << 20;

}  // namespace fedse::runtime
