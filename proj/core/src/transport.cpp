#include "fedse/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>

namespace fedse::runtime {

namespace {

[[noreturn]] void fail(const std::string& what) {
  throw std::runtime_error("tcp transport: " + what + ": " + std::strerror(errno));
}

class Socket {
 public:
  explicit Socket(int fd = -1) : fd_(fd) {}
  ~Socket() {
    if (fd_ >= 0) ::close(fd_);
  }
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      if (fd_ >= 0) ::close(fd_);
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  int get() const { return fd_; }
  int release() { return std::exchange(fd_, -1); }

 private:
  int fd_;
};

void wait_for(int fd, short events, std::chrono::milliseconds timeout, const char* what) {
  pollfd p{fd, events, 0};
  for (;;) {
    const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc > 0) return;
    if (rc == 0) throw std::runtime_error(std::string("tcp transport: timeout waiting for ") + what);
    if (errno != EINTR) fail("poll");
  }
}

void write_all(int fd, const std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      fail("send");
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
}

void read_all(int fd, std::uint8_t* p, std::size_t n, std::chrono::milliseconds timeout) {
  while (n > 0) {
    wait_for(fd, POLLIN, timeout, "frame");
    const ssize_t r = ::recv(fd, p, n, 0);
    if (r < 0) {
      if (errno == EINTR) continue;
      fail("recv");
    }
    if (r == 0) throw std::runtime_error("tcp transport: peer closed mid-frame");
    p += r;
    n -= static_cast<std::size_t>(r);
  }
}

void send_frame(int fd, const Bytes& msg) {
  if (msg.size() > kMaxFrameBytes) throw std::runtime_error("tcp transport: frame too large");
  const auto n = static_cast<std::uint32_t>(msg.size());
  const std::uint8_t len[4] = {static_cast<std::uint8_t>(n), static_cast<std::uint8_t>(n >> 8),
                               static_cast<std::uint8_t>(n >> 16),
                               static_cast<std::uint8_t>(n >> 24)};
  write_all(fd, len, 4);
  write_all(fd, msg.data(), msg.size());
}

Bytes recv_frame(int fd, std::chrono::milliseconds timeout) {
  std::uint8_t len[4];
  read_all(fd, len, 4, timeout);
  const std::uint32_t n = len[0] | (len[1] << 8) | (len[2] << 16) |
                          (static_cast<std::uint32_t>(len[3]) << 24);
  if (n > kMaxFrameBytes) throw std::runtime_error("tcp transport: frame length exceeds limit");
  Bytes out(n);
  read_all(fd, out.data(), n, timeout);
  return out;
}

sockaddr_in loopback(std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  return addr;
}

}  // namespace

std::vector<Bytes> InProcessTransport::exchange(const Bytes& broadcast, std::size_t k,
                                                const ClientTask& task) {
  std::vector<Bytes> uploads(k);
  if (!parallel_ || k == 1) {
    for (std::size_t i = 0; i < k; ++i) uploads[i] = task(i, broadcast);
    return uploads;
  }
  std::vector<std::exception_ptr> errors(k);
  std::vector<std::thread> workers;
  workers.reserve(k);
  for (std::size_t i = 0; i < k; ++i)
    workers.emplace_back([&, i] {
      try {
        uploads[i] = task(i, broadcast);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return uploads;
}

TcpLoopbackTransport::TcpLoopbackTransport(std::uint16_t port, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (s.get() < 0) fail("socket");
  const int one = 1;
  ::setsockopt(s.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  auto addr = loopback(port);
  if (::bind(s.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) fail("bind");
  if (::listen(s.get(), 64) < 0) fail("listen");
  socklen_t len = sizeof addr;
  if (::getsockname(s.get(), reinterpret_cast<sockaddr*>(&addr), &len) < 0) fail("getsockname");
  port_ = ntohs(addr.sin_port);
  listen_fd_ = s.release();
}

TcpLoopbackTransport::~TcpLoopbackTransport() {
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

std::vector<Bytes> TcpLoopbackTransport::exchange(const Bytes& broadcast, std::size_t k,
                                                  const ClientTask& task) {
  std::vector<std::exception_ptr> errors(k);
  std::atomic<bool> client_failed{false};
  std::vector<std::thread> clients;
  clients.reserve(k);
  for (std::size_t i = 0; i < k; ++i)
    clients.emplace_back([&, i] {
      try {
        Socket s(::socket(AF_INET, SOCK_STREAM, 0));
        if (s.get() < 0) fail("socket");
        auto addr = loopback(port_);
        if (::connect(s.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
          fail("connect");
        const Bytes b = recv_frame(s.get(), timeout_);
        send_frame(s.get(), task(i, b));
      } catch (...) {
        errors[i] = std::current_exception();
        client_failed = true;
      }
    });

  std::vector<Bytes> uploads;
  std::exception_ptr server_error;
  try {
    std::vector<Socket> conns;
    // Short poll slices so a client that dies before connecting does not
    // leave the server waiting for the full timeout.
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    while (conns.size() < k) {
      if (client_failed) throw std::runtime_error("tcp transport: client failed");
      if (std::chrono::steady_clock::now() > deadline)
        throw std::runtime_error("tcp transport: timeout waiting for connections");
      pollfd p{listen_fd_, POLLIN, 0};
      const int rc = ::poll(&p, 1, 50);
      if (rc < 0 && errno != EINTR) fail("poll");
      if (rc <= 0) continue;
      Socket c(::accept(listen_fd_, nullptr, nullptr));
      if (c.get() < 0) fail("accept");
      conns.push_back(std::move(c));
    }
    for (auto& c : conns) send_frame(c.get(), broadcast);
    for (auto& c : conns) uploads.push_back(recv_frame(c.get(), timeout_));
  } catch (...) {
    server_error = std::current_exception();
  }
  for (auto& t : clients) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  if (server_error) std::rethrow_exception(server_error);
  return uploads;
}

}  // namespace fedse::runtime
