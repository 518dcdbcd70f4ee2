// client.hpp - CDB client: fetch, stat and ping over the wire protocol.
#pragma once

#include "vlab/cdb/protocol.hpp"

#include <chrono>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

namespace vlab::cdb
{

/// The endpoint could not be reached (refused, unresolvable, timed out).
class ConnectError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// The server answered with an ERR response.
class ProtocolError : public std::runtime_error
{
public:
  enum class Code { no_database, no_record, bad_request };
  ProtocolError(Code code, const std::string & message) : std::runtime_error(message), code_(code) {}
  Code code() const { return code_; }

private:
  Code code_;
};

/// The byte stream did not follow the framing rules (short payload, garbled
/// status line, connection dropped mid-response).
class FramingError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct ClientOptions
{
  std::chrono::milliseconds connect_timeout{10'000};
  std::chrono::milliseconds io_timeout{30'000};
};

struct MoleculeRecord
{
  std::uint64_t number = 0;
  std::string bytes;
};

/// One connection, reused for sequential requests. Not thread-safe.
class CdbClient
{
public:
  explicit CdbClient(Endpoint endpoint, ClientOptions options = {});
  ~CdbClient();
  CdbClient(CdbClient &&) noexcept;
  CdbClient & operator=(CdbClient &&) noexcept;

  std::string get(const std::string & database, std::uint64_t n);
  std::uint64_t stat(const std::string & database);
  /// Seconds for one PING round trip.
  double ping();

  const Endpoint & endpoint() const { return endpoint_; }

private:
  struct Connection;

  /// Sends a request and returns the status line's argument after "OK".
  std::uint64_t exchange(const Request & request);
  Connection & connection();

  Endpoint endpoint_;
  ClientOptions options_;
  std::unique_ptr<Connection> conn_;
};

MoleculeRecord fetch(const Endpoint & endpoint, const std::string & database, std::uint64_t n, ClientOptions options = {});

}  // namespace vlab::cdb
