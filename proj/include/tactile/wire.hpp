#pragma once

// Stream transport between the service and its clients: each message is a
// 4-byte big-endian length followed by that many bytes of UTF-8 JSON.
// Every message object carries a "type" field.

#include <array>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "json.hpp"

namespace tactile::wire {

inline constexpr std::uint32_t kMaxMessageBytes = 1u << 20;

inline std::string encode_message(const nlohmann::json& msg) {
  const std::string body = msg.dump();
  if (body.size() > kMaxMessageBytes) throw std::length_error("wire: message too large");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<char>((n >> 24) & 0xFF));
  out.push_back(static_cast<char>((n >> 16) & 0xFF));
  out.push_back(static_cast<char>((n >> 8) & 0xFF));
  out.push_back(static_cast<char>(n & 0xFF));
  out += body;
  return out;
}

/// Reassembles messages from arbitrary byte chunks.
class MessageReader {
 public:
  void push(std::string_view bytes) { buf_.append(bytes); }

  /// Throws std::runtime_error on oversize length or invalid JSON.
  std::optional<nlohmann::json> next() {
    if (buf_.size() < 4) return std::nullopt;
    const auto b = reinterpret_cast<const unsigned char*>(buf_.data());
    const std::uint32_t n = (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
                            (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
    if (n > kMaxMessageBytes) throw std::runtime_error("wire: declared length too large");
    if (buf_.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
    auto msg = nlohmann::json::parse(buf_.begin() + 4, buf_.begin() + 4 + n);
    buf_.erase(0, 4 + n);
    if (!msg.is_object() || !msg.contains("type"))
      throw std::runtime_error("wire: message must be an object with a type field");
    return msg;
  }

 private:
  std::string buf_;
};

// ---- minimal POSIX socket helpers ------------------------------------------

/// Owning file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = o.fd_;
      o.fd_ = -1;
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  void shutdown() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

  bool send_all(std::string_view data) {
    std::size_t done = 0;
    while (done < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + done, data.size() - done, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      done += static_cast<std::size_t>(n);
    }
    return true;
  }

  /// Waits up to `timeout_ms` for data. Returns bytes read, 0 on timeout,
  /// -1 on EOF or error.
  long recv_some(char* buf, std::size_t cap, int timeout_ms) {
    pollfd p{fd_, POLLIN, 0};
    const int pr = ::poll(&p, 1, timeout_ms);
    if (pr == 0) return 0;
    if (pr < 0) return errno == EINTR ? 0 : -1;
    const ssize_t n = ::recv(fd_, buf, cap, 0);
    if (n <= 0) return -1;
    return n;
  }

 private:
  int fd_ = -1;
};

inline Socket listen_tcp(const std::string& host, int port) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw std::invalid_argument("listen: bad IPv4 address " + host);
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw std::runtime_error("bind " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  if (::listen(s.fd(), 8) != 0) throw std::runtime_error(std::string("listen: ") + std::strerror(errno));
  return s;
}

inline int local_port(const Socket& s) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) return -1;
  return ntohs(addr.sin_port);
}

inline Socket connect_tcp(const std::string& host, int port) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw std::invalid_argument("connect: bad IPv4 address " + host);
  if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw std::runtime_error("connect " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

/// Blocking client side of the stream, used by tools and tests.
class StreamClient {
 public:
  StreamClient(const std::string& host, int port) : sock_(connect_tcp(host, port)) {}

  bool send(const nlohmann::json& msg) { return sock_.send_all(encode_message(msg)); }

  /// Next message, or nullopt on timeout / closed connection.
  std::optional<nlohmann::json> receive(int timeout_ms) {
    for (;;) {
      if (auto m = reader_.next()) return m;
      std::array<char, 4096> buf{};
      const long n = sock_.recv_some(buf.data(), buf.size(), timeout_ms);
      if (n <= 0) return std::nullopt;
      reader_.push(std::string_view(buf.data(), static_cast<std::size_t>(n)));
    }
  }

  void close() { sock_.close(); }

 private:
  Socket sock_;
  MessageReader reader_;
};

}  // namespace tactile::wire
