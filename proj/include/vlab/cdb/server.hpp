// server.hpp - multi-client CDB record server.
#pragma once

#include "vlab/cdb/index.hpp"
#include "vlab/cdb/protocol.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace vlab::cdb
{

/// An opened database: its index plus a descriptor used for positional reads.
/// Immutable after construction, so one instance serves every connection.
class Database
{
public:
  /// Loads the index and rejects it when stale.
  Database(std::string name, const std::filesystem::path & database, const std::filesystem::path & index);
  ~Database();
  Database(const Database &) = delete;
  Database & operator=(const Database &) = delete;

  const std::string & name() const { return name_; }
  const CdbIndex & index() const { return index_; }
  /// Reads record n with pread; throws RecordOutOfRange.
  std::string read_record(std::uint64_t n) const;

private:
  std::string name_;
  CdbIndex index_;
  int fd_ = -1;
};

struct DatabaseSpec
{
  std::string name;
  std::filesystem::path database;
  std::filesystem::path index;
};

/// Server catalog file: `<name> <database-path> [<index-path>]` per line;
/// relative paths resolve against the catalog's directory and the index
/// defaults to `<database-path>.idx`.
std::vector<DatabaseSpec> read_server_catalog(const std::filesystem::path & path);

struct ServerConfig
{
  std::string bind_host = "127.0.0.1";
  std::uint16_t port = 0;
  std::vector<DatabaseSpec> databases;
  /// Artificial delay before every response, for latency experiments.
  std::chrono::milliseconds response_delay{0};
};

/// Thread-per-connection server. Connections are handled independently;
/// requests on one connection are answered in order.
class Server
{
public:
  explicit Server(ServerConfig config);
  ~Server();
  Server(const Server &) = delete;
  Server & operator=(const Server &) = delete;

  /// Opens all databases, binds and starts accepting. Throws on stale
  /// indexes or bind failure.
  void start();
  void stop();

  std::uint16_t port() const { return port_; }
  Endpoint endpoint() const { return Endpoint{config_.bind_host, port_}; }
  std::uint64_t requests_served() const { return requests_.load(); }

private:
  struct Connection;

  void accept_loop();
  void serve_connection(Connection & conn);
  std::string respond(const Request & request, std::string & payload) const;
  void reap_finished();

  ServerConfig config_;
  std::map<std::string, std::unique_ptr<Database>, std::less<>> databases_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> requests_{0};
  std::thread acceptor_;
  std::mutex connections_mutex_;
  std::vector<std::unique_ptr<Connection>> connections_;
};

}  // namespace vlab::cdb
