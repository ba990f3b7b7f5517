#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace cubewall::net {

class NetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Owning file descriptor for a TCP socket.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void close();
  // Wakes threads blocked in accept/recv on this socket.
  void shutdown();

  void write_all(std::string_view data);

 private:
  int fd_ = -1;
};

// Throws NetError naming the port when it cannot be bound.
Socket listen_tcp(const std::string& host, std::uint16_t port, int backlog = 8);
std::uint16_t local_port(const Socket& s);
// Returns an invalid socket once the listener has been shut down.
Socket accept_connection(const Socket& listener);
Socket connect_tcp(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout);

// Buffered newline-delimited reader. Returns nullopt on orderly EOF.
class LineReader {
 public:
  explicit LineReader(const Socket& s, std::size_t max_line = 16 << 20) : sock_(s), max_line_(max_line) {}
  std::optional<std::string> read_line();

 private:
  const Socket& sock_;
  std::size_t max_line_;
  std::string buf_;
  std::size_t scan_from_ = 0;
};

}  // namespace cubewall::net
