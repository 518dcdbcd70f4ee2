#include "socket.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <memory>
#include <system_error>

namespace vlab::cdb::net
{

namespace
{

[[noreturn]] void throw_errno(int err, const std::string & what)
{
  throw std::system_error(err, std::generic_category(), what);
}

struct AddrInfoDeleter
{
  void operator()(addrinfo * ai) const { freeaddrinfo(ai); }
};

std::unique_ptr<addrinfo, AddrInfoDeleter> resolve(const std::string & host, std::uint16_t port, bool passive)
{
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = passive ? AI_PASSIVE : 0;
  addrinfo * result = nullptr;
  const auto service = std::to_string(port);
  const int rc = getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &result);
  if (rc != 0) {
    throw std::system_error(
      std::make_error_code(std::errc::host_unreachable), "resolve " + host + ": " + gai_strerror(rc));
  }
  return std::unique_ptr<addrinfo, AddrInfoDeleter>(result);
}

}  // namespace

void FileDescriptor::reset()
{
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

FileDescriptor connect_tcp(const std::string & host, std::uint16_t port, std::chrono::milliseconds timeout)
{
  auto addrs = resolve(host, port, false);
  int last_error = ECONNREFUSED;
  for (addrinfo * ai = addrs.get(); ai; ai = ai->ai_next) {
    FileDescriptor fd(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
    if (!fd) {
      last_error = errno;
      continue;
    }
    const int flags = ::fcntl(fd.get(), F_GETFL, 0);
    ::fcntl(fd.get(), F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd.get(), ai->ai_addr, ai->ai_addrlen);
    if (rc != 0 && errno == EINPROGRESS) {
      pollfd pfd{fd.get(), POLLOUT, 0};
      rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
      if (rc == 0) {
        last_error = ETIMEDOUT;
        continue;
      }
      int so_error = 0;
      socklen_t len = sizeof(so_error);
      ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &so_error, &len);
      if (rc < 0 || so_error != 0) {
        last_error = rc < 0 ? errno : so_error;
        continue;
      }
    } else if (rc != 0) {
      last_error = errno;
      continue;
    }
    ::fcntl(fd.get(), F_SETFL, flags);
    int one = 1;
    ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return fd;
  }
  throw_errno(last_error, "connect " + host + ":" + std::to_string(port));
}

FileDescriptor listen_tcp(const std::string & host, std::uint16_t port, int backlog)
{
  auto addrs = resolve(host, port, true);
  int last_error = EADDRNOTAVAIL;
  for (addrinfo * ai = addrs.get(); ai; ai = ai->ai_next) {
    FileDescriptor fd(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
    if (!fd) {
      last_error = errno;
      continue;
    }
    int one = 1;
    ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd.get(), ai->ai_addr, ai->ai_addrlen) != 0 || ::listen(fd.get(), backlog) != 0) {
      last_error = errno;
      continue;
    }
    return fd;
  }
  throw_errno(last_error, "bind " + host + ":" + std::to_string(port));
}

std::uint16_t local_port(int fd)
{
  sockaddr_storage addr{};
  socklen_t len = sizeof(addr);
  if (::getsockname(fd, reinterpret_cast<sockaddr *>(&addr), &len) != 0) {
    throw_errno(errno, "getsockname");
  }
  if (addr.ss_family == AF_INET6) {
    return ntohs(reinterpret_cast<sockaddr_in6 *>(&addr)->sin6_port);
  }
  return ntohs(reinterpret_cast<sockaddr_in *>(&addr)->sin_port);
}

void set_io_timeout(int fd, std::chrono::milliseconds timeout)
{
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
}

void send_all(int fd, std::string_view data)
{
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) {
        continue;
      }
      throw_errno(errno, "send");
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

bool Reader::fill()
{
  char chunk[16384];
  for (;;) {
    const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
    if (n > 0) {
      buffer_.append(chunk, static_cast<std::size_t>(n));
      return true;
    }
    if (n == 0) {
      return false;
    }
    if (errno == EINTR) {
      continue;
    }
    if (errno == EAGAIN || errno == EWOULDBLOCK) {
      throw_errno(ETIMEDOUT, "recv");
    }
    throw_errno(errno, "recv");
  }
}

void Reader::compact()
{
  if (start_ > 0) {
    buffer_.erase(0, start_);
    start_ = 0;
  }
}

Reader::LineStatus Reader::read_line(std::string & line, std::size_t max_length)
{
  compact();
  std::size_t scanned = 0;
  for (;;) {
    const auto nl = buffer_.find('\n', scanned);
    if (nl != std::string::npos) {
      if (nl - start_ > max_length + 1) {
        return LineStatus::too_long;
      }
      const bool crlf = nl > start_ && buffer_[nl - 1] == '\r';
      line.assign(buffer_, start_, nl - start_ - (crlf ? 1 : 0));
      start_ = nl + 1;
      return crlf ? LineStatus::ok : LineStatus::bare_lf;
    }
    if (buffer_.size() - start_ > max_length + 1) {
      return LineStatus::too_long;
    }
    scanned = buffer_.size();
    if (!fill()) {
      return LineStatus::eof;
    }
  }
}

bool Reader::read_exact(std::size_t n, std::string & out)
{
  compact();
  while (buffer_.size() - start_ < n) {
    if (!fill()) {
      return false;
    }
  }
  out.assign(buffer_, start_, n);
  start_ += n;
  return true;
}

}  // namespace vlab::cdb::net
