// Thin POSIX socket helpers shared by the CDB server and client.
#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

namespace vlab::cdb::net
{

class FileDescriptor
{
public:
  FileDescriptor() = default;
  explicit FileDescriptor(int fd) : fd_(fd) {}
  FileDescriptor(FileDescriptor && other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  FileDescriptor & operator=(FileDescriptor && other) noexcept
  {
    if (this != &other) {
      reset();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  FileDescriptor(const FileDescriptor &) = delete;
  FileDescriptor & operator=(const FileDescriptor &) = delete;
  ~FileDescriptor() { reset(); }

  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  void reset();

private:
  int fd_ = -1;
};

/// Throws std::system_error; timeout yields std::errc::timed_out.
FileDescriptor connect_tcp(const std::string & host, std::uint16_t port, std::chrono::milliseconds timeout);

/// Bound and listening socket; port 0 picks an ephemeral port.
FileDescriptor listen_tcp(const std::string & host, std::uint16_t port, int backlog = 128);
std::uint16_t local_port(int fd);

void set_io_timeout(int fd, std::chrono::milliseconds timeout);

/// Writes everything or throws std::system_error.
void send_all(int fd, std::string_view data);

/// Buffered reads for CRLF-framed lines followed by raw payloads.
class Reader
{
public:
  explicit Reader(int fd) : fd_(fd) {}

  enum class LineStatus { ok, eof, too_long, bare_lf };

  /// Reads up to and including '\n'; `line` excludes the terminator.
  LineStatus read_line(std::string & line, std::size_t max_length);

  /// False when the peer closes before `n` bytes arrive.
  bool read_exact(std::size_t n, std::string & out);

private:
  bool fill();
  void compact();

  int fd_;
  std::string buffer_;
  std::size_t start_ = 0;
};

}  // namespace vlab::cdb::net
