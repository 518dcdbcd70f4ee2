#include "vlab/cdb/server.hpp"

#include "socket.hpp"
#include "vlab/digest.hpp"

#include <fcntl.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

namespace vlab::cdb
{

Database::Database(std::string name, const std::filesystem::path & database, const std::filesystem::path & index)
: name_(std::move(name))
{
  index_ = read_index(read_file(index));
  index_.database_name = name_;
  check_fresh(index_, database);
  fd_ = ::open(database.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd_ < 0) {
    throw CdbError("cannot open database " + database.string() + ": " + std::strerror(errno));
  }
}

Database::~Database()
{
  if (fd_ >= 0) {
    ::close(fd_);
  }
}

std::string Database::read_record(std::uint64_t n) const
{
  const auto entry = lookup(index_, n);
  std::string out(entry.length, '\0');
  std::size_t done = 0;
  while (done < entry.length) {
    const ssize_t got =
      ::pread(fd_, out.data() + done, entry.length - done, static_cast<off_t>(entry.offset + done));
    if (got < 0 && errno == EINTR) {
      continue;
    }
    if (got <= 0) {
      throw CdbError("short read on database " + name_);
    }
    done += static_cast<std::size_t>(got);
  }
  return out;
}

std::vector<DatabaseSpec> read_server_catalog(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw CdbError("cannot open server catalog " + path.string());
  }
  const auto base = path.parent_path();
  auto resolve = [&](const std::string & p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  std::vector<DatabaseSpec> specs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream words(line);
    std::string name;
    std::string db;
    std::string idx;
    std::string extra;
    if (!(words >> name)) {
      continue;
    }
    if (!(words >> db) || (words >> idx && words >> extra)) {
      throw CdbError(path.string() + ":" + std::to_string(line_no) + ": expected <name> <database> [<index>]");
    }
    if (!is_database_name(name)) {
      throw CdbError(path.string() + ":" + std::to_string(line_no) + ": invalid database name '" + name + "'");
    }
    DatabaseSpec spec{name, resolve(db), {}};
    spec.index = idx.empty() ? std::filesystem::path(spec.database.string() + ".idx") : resolve(idx);
    specs.push_back(std::move(spec));
  }
  return specs;
}

struct Server::Connection
{
  net::FileDescriptor fd;
  std::thread worker;
  std::atomic<bool> finished{false};
};

Server::Server(ServerConfig config) : config_(std::move(config)) {}

Server::~Server()
{
  stop();
}

void Server::start()
{
  for (const auto & spec : config_.databases) {
    if (!is_database_name(spec.name)) {
      throw CdbError("invalid database name '" + spec.name + "'");
    }
    databases_[spec.name] = std::make_unique<Database>(spec.name, spec.database, spec.index);
  }
  auto listener = net::listen_tcp(config_.bind_host, config_.port);
  port_ = net::local_port(listener.get());
  listen_fd_ = ::dup(listener.get());
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void Server::stop()
{
  if (!running_.exchange(false)) {
    return;
  }
  ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) {
    acceptor_.join();
  }
  ::close(listen_fd_);
  listen_fd_ = -1;
  std::vector<std::unique_ptr<Connection>> remaining;
  {
    std::lock_guard lock(connections_mutex_);
    remaining.swap(connections_);
  }
  for (auto & conn : remaining) {
    ::shutdown(conn->fd.get(), SHUT_RDWR);
  }
  for (auto & conn : remaining) {
    if (conn->worker.joinable()) {
      conn->worker.join();
    }
  }
}

void Server::reap_finished()
{
  std::vector<std::unique_ptr<Connection>> done;
  {
    std::lock_guard lock(connections_mutex_);
    for (auto it = connections_.begin(); it != connections_.end();) {
      if ((*it)->finished) {
        done.push_back(std::move(*it));
        it = connections_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto & conn : done) {
    conn->worker.join();
  }
}

void Server::accept_loop()
{
  while (running_) {
    const int client = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (client < 0) {
      if (errno == EINTR || errno == ECONNABORTED) {
        continue;
      }
      break;
    }
    reap_finished();
    auto conn = std::make_unique<Connection>();
    conn->fd = net::FileDescriptor(client);
    Connection * raw = conn.get();
    std::lock_guard lock(connections_mutex_);
    if (!running_) {
      break;
    }
    conn->worker = std::thread([this, raw] {
      serve_connection(*raw);
      raw->finished = true;
    });
    connections_.push_back(std::move(conn));
  }
}

std::string Server::respond(const Request & request, std::string & payload) const
{
  if (request.kind == Request::Kind::ping) {
    return "OK 0\r\n";
  }
  auto it = databases_.find(request.database);
  if (it == databases_.end()) {
    return "ERR NODB " + request.database + "\r\n";
  }
  const Database & db = *it->second;
  if (request.kind == Request::Kind::stat) {
    return "OK " + std::to_string(db.index().record_count()) + "\r\n";
  }
  if (request.n < 1 || request.n > db.index().record_count()) {
    return "ERR NOREC " + std::to_string(request.n) + "\r\n";
  }
  payload = db.read_record(request.n);
  return "OK " + std::to_string(payload.size()) + "\r\n";
}

void Server::serve_connection(Connection & conn)
{
  const int fd = conn.fd.get();
  net::Reader reader(fd);
  std::string line;
  try {
    for (;;) {
      const auto status = reader.read_line(line, max_request_line);
      if (status == net::Reader::LineStatus::eof || status == net::Reader::LineStatus::too_long) {
        return;
      }
      std::string payload;
      std::string head;
      if (status == net::Reader::LineStatus::bare_lf) {
        head = "ERR BADREQ\r\n";
      } else if (auto request = parse_request(line)) {
        head = respond(*request, payload);
      } else {
        head = "ERR BADREQ\r\n";
      }
      if (config_.response_delay.count() > 0) {
        std::this_thread::sleep_for(config_.response_delay);
      }
      head += payload;
      net::send_all(fd, head);
      ++requests_;
    }
  } catch (const std::exception &) {
    // Peer vanished or the socket was shut down by stop().
  }
}

}  // namespace vlab::cdb
