// protocol.hpp - CDB wire protocol.
//
// Requests are single CRLF-terminated ASCII lines:
//   GET <database> <n>   ->  OK <length> CRLF, then exactly <length> raw bytes
//   STAT <database>      ->  OK <record-count> CRLF
//   PING                 ->  OK 0 CRLF
// Errors: ERR NODB <name> | ERR NOREC <n> | ERR BADREQ, each CRLF-terminated.
#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace vlab::cdb
{

inline constexpr std::size_t max_request_line = 1024;

struct Endpoint
{
  std::string host;
  std::uint16_t port = 0;

  std::string to_string() const { return host + ":" + std::to_string(port); }
  /// Parses `host:port`; throws std::invalid_argument.
  static Endpoint parse(std::string_view text);

  friend auto operator<=>(const Endpoint &, const Endpoint &) = default;
};

struct Request
{
  enum class Kind { get, stat, ping };
  Kind kind = Kind::ping;
  std::string database;
  std::uint64_t n = 0;

  friend bool operator==(const Request &, const Request &) = default;
};

bool is_database_name(std::string_view name);

/// Parses one request line without its CRLF; nullopt means BADREQ.
std::optional<Request> parse_request(std::string_view line);
std::string format_request(const Request & request);

}  // namespace vlab::cdb
