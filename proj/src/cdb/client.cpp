#include "vlab/cdb/client.hpp"

#include "socket.hpp"

#include <charconv>
#include <system_error>

namespace vlab::cdb
{

struct CdbClient::Connection
{
  explicit Connection(net::FileDescriptor socket) : fd(std::move(socket)), reader(fd.get()) {}
  net::FileDescriptor fd;
  net::Reader reader;
};

CdbClient::CdbClient(Endpoint endpoint, ClientOptions options)
: endpoint_(std::move(endpoint)), options_(options)
{
}

CdbClient::~CdbClient() = default;
CdbClient::CdbClient(CdbClient &&) noexcept = default;
CdbClient & CdbClient::operator=(CdbClient &&) noexcept = default;

CdbClient::Connection & CdbClient::connection()
{
  if (!conn_) {
    try {
      auto fd = net::connect_tcp(endpoint_.host, endpoint_.port, options_.connect_timeout);
      net::set_io_timeout(fd.get(), options_.io_timeout);
      conn_ = std::make_unique<Connection>(std::move(fd));
    } catch (const std::system_error & e) {
      throw ConnectError("cannot connect to " + endpoint_.to_string() + ": " + e.what());
    }
  }
  return *conn_;
}

std::uint64_t CdbClient::exchange(const Request & request)
{
  auto & conn = connection();
  std::string line;
  try {
    net::send_all(conn.fd.get(), format_request(request));
    const auto status = conn.reader.read_line(line, 256);
    if (status != net::Reader::LineStatus::ok) {
      conn_.reset();
      throw FramingError("malformed or missing response line from " + endpoint_.to_string());
    }
  } catch (const std::system_error & e) {
    conn_.reset();
    throw FramingError("connection to " + endpoint_.to_string() + " failed: " + e.what());
  }

  if (line.rfind("OK ", 0) == 0) {
    std::uint64_t value = 0;
    const char * first = line.data() + 3;
    const char * last = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || first == last) {
      conn_.reset();
      throw FramingError("malformed response '" + line + "'");
    }
    return value;
  }
  if (line.rfind("ERR NODB", 0) == 0) {
    throw ProtocolError(ProtocolError::Code::no_database, "no such database '" + request.database + "'");
  }
  if (line.rfind("ERR NOREC", 0) == 0) {
    throw ProtocolError(
      ProtocolError::Code::no_record, "no record " + std::to_string(request.n) + " in '" + request.database + "'");
  }
  if (line == "ERR BADREQ") {
    throw ProtocolError(ProtocolError::Code::bad_request, "server rejected the request as malformed");
  }
  conn_.reset();
  throw FramingError("unexpected response '" + line + "'");
}

std::string CdbClient::get(const std::string & database, std::uint64_t n)
{
  const auto length = exchange(Request{Request::Kind::get, database, n});
  std::string bytes;
  bool complete = false;
  try {
    complete = conn_->reader.read_exact(static_cast<std::size_t>(length), bytes);
  } catch (const std::system_error & e) {
    conn_.reset();
    throw FramingError("connection to " + endpoint_.to_string() + " failed: " + e.what());
  }
  if (!complete) {
    conn_.reset();
    throw FramingError(
      "short read: connection closed before " + std::to_string(length) + " record bytes arrived");
  }
  return bytes;
}

std::uint64_t CdbClient::stat(const std::string & database)
{
  return exchange(Request{Request::Kind::stat, database, 0});
}

double CdbClient::ping()
{
  connection();
  const auto start = std::chrono::steady_clock::now();
  exchange(Request{Request::Kind::ping, {}, 0});
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  return elapsed.count();
}

MoleculeRecord fetch(const Endpoint & endpoint, const std::string & database, std::uint64_t n, ClientOptions options)
{
  CdbClient client(endpoint, options);
  return MoleculeRecord{n, client.get(database, n)};
}

}  // namespace vlab::cdb
