#include "support.hpp"

#include "vlab/cdb/client.hpp"
#include "vlab/cdb/index.hpp"
#include "vlab/cdb/replica.hpp"
#include "vlab/cdb/server.hpp"
#include "vlab/digest.hpp"

#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <thread>

using namespace vlab;
using namespace vlab::cdb;

namespace
{

// A served copy of a synthetic database.
struct Fixture
{
  testing::TempDir dir;
  testing::SyntheticDb db;
  std::unique_ptr<Server> server;

  explicit Fixture(std::size_t records, std::chrono::milliseconds delay = std::chrono::milliseconds{0})
  {
    std::mt19937_64 rng(records);
    db = testing::make_db(rng, records, 60, 900);
    const auto path = dir / "aldrich.mol2";
    write_file(path, db.bytes());
    write_file(dir / "aldrich.mol2.idx", write_index(build_index_file(path)));
    write_file(dir / "catalog", "aldrich aldrich.mol2\n");
    ServerConfig config;
    config.databases = read_server_catalog(dir / "catalog");
    config.response_delay = delay;
    server = std::make_unique<Server>(config);
    server->start();
  }
};

// Sends raw bytes on a fresh connection and reads until the peer closes or
// `expect` bytes arrived.
std::string raw_exchange(std::uint16_t port, const std::string & bytes, std::size_t expect)
{
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  REQUIRE(fd >= 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr *>(&addr), sizeof addr) == 0);
  REQUIRE(::write(fd, bytes.data(), bytes.size()) == static_cast<ssize_t>(bytes.size()));
  std::string out;
  char buf[4096];
  while (out.size() < expect) {
    const auto got = ::read(fd, buf, sizeof buf);
    if (got <= 0) {
      break;
    }
    out.append(buf, static_cast<std::size_t>(got));
  }
  ::close(fd);
  return out;
}

}  // namespace

TEST_SUITE("cdb protocol")
{
  TEST_CASE("request parsing")
  {
    CHECK(parse_request("GET aldrich 5") == Request{Request::Kind::get, "aldrich", 5});
    CHECK(parse_request("STAT aldrich") == Request{Request::Kind::stat, "aldrich", 0});
    CHECK(parse_request("PING") == Request{Request::Kind::ping, "", 0});
    CHECK_FALSE(parse_request("GET aldrich"));
    CHECK_FALSE(parse_request("GET aldrich x"));
    CHECK_FALSE(parse_request("GET aldrich -1"));
    CHECK_FALSE(parse_request("get aldrich 1"));
    CHECK_FALSE(parse_request("GET ../etc 1"));
    CHECK_FALSE(parse_request(""));
    CHECK(format_request(Request{Request::Kind::get, "a", 9}) == "GET a 9\r\n");
  }

  TEST_CASE("endpoint parsing")
  {
    const auto e = Endpoint::parse("localhost:5001");
    CHECK(e.host == "localhost");
    CHECK(e.port == 5001);
    CHECK(e.to_string() == "localhost:5001");
    CHECK_THROWS(Endpoint::parse("localhost"));
    CHECK_THROWS(Endpoint::parse("host:99999"));
    CHECK_THROWS(Endpoint::parse(":80"));
  }
}

TEST_SUITE("cdb server")
{
  TEST_CASE("get, stat and ping")
  {
    Fixture f(40);
    CdbClient client(f.server->endpoint());
    CHECK(client.stat("aldrich") == 40);
    for (std::uint64_t n : {1, 17, 40}) {
      CHECK(client.get("aldrich", n) == f.db.records[n - 1]);
    }
    CHECK(client.ping() >= 0.0);
  }

  TEST_CASE("error responses")
  {
    Fixture f(5);
    CdbClient client(f.server->endpoint());
    try {
      client.get("nosuch", 1);
      FAIL("expected NODB");
    } catch (const ProtocolError & e) {
      CHECK(e.code() == ProtocolError::Code::no_database);
    }
    try {
      client.get("aldrich", 6);
      FAIL("expected NOREC");
    } catch (const ProtocolError & e) {
      CHECK(e.code() == ProtocolError::Code::no_record);
    }
    // The connection survives error responses.
    CHECK(client.get("aldrich", 5) == f.db.records[4]);

    const auto port = f.server->port();
    CHECK(raw_exchange(port, "GET aldrich 0\r\n", 13) == "ERR NOREC 0\r\n");
    CHECK(raw_exchange(port, "HELLO\r\n", 12) == "ERR BADREQ\r\n");
    CHECK(raw_exchange(port, "GET aldrich 1\n", 12) == "ERR BADREQ\r\n");
    const auto head = "OK " + std::to_string(f.db.records[1].size()) + "\r\n";
    const auto ok = raw_exchange(port, "GET aldrich 2\r\n", head.size() + f.db.records[1].size());
    CHECK(ok == head + f.db.records[1]);
    CHECK(raw_exchange(port, "PING\r\nSTAT aldrich\r\n", 11) == "OK 0\r\nOK 5\r\n");
  }

  TEST_CASE("concurrent clients")
  {
    Fixture f(300);
    constexpr int clients = 32;
    constexpr int requests = 100;
    std::atomic<int> mismatches{0};
    std::atomic<int> errors{0};
    std::vector<std::thread> threads;
    for (int c = 0; c < clients; ++c) {
      threads.emplace_back([&, c] {
        try {
          CdbClient client(f.server->endpoint());
          std::mt19937_64 rng(c);
          for (int i = 0; i < requests; ++i) {
            const auto n = 1 + rng() % 300;
            if (client.get("aldrich", n) != f.db.records[n - 1]) {
              ++mismatches;
            }
          }
        } catch (const std::exception &) {
          ++errors;
        }
      });
    }
    for (auto & t : threads) {
      t.join();
    }
    CHECK(mismatches == 0);
    CHECK(errors == 0);
    CHECK(f.server->requests_served() == clients * requests);
  }

  TEST_CASE("fetch helper and stopped server")
  {
    Fixture f(8);
    const auto rec = fetch(f.server->endpoint(), "aldrich", 5);
    CHECK(rec.number == 5);
    CHECK(rec.bytes == f.db.records[4]);
    const auto where = f.server->endpoint();
    f.server->stop();
    ClientOptions quick;
    quick.connect_timeout = std::chrono::milliseconds{500};
    CHECK_THROWS_AS(fetch(where, "aldrich", 1, quick), ConnectError);
  }

  TEST_CASE("stale index refuses to start")
  {
    Fixture f(3);
    f.server->stop();
    write_file(f.dir / "aldrich.mol2", f.db.bytes() + "extra\n");
    ServerConfig config;
    config.databases = read_server_catalog(f.dir / "catalog");
    Server server(config);
    CHECK_THROWS_AS(server.start(), StaleIndexError);
  }

  TEST_CASE("server catalog parsing")
  {
    testing::TempDir dir;
    write_file(dir / "catalog", "# comment\na x.mol2\nb /abs/y.mol2 y.idx\n");
    const auto specs = read_server_catalog(dir / "catalog");
    REQUIRE(specs.size() == 2);
    CHECK(specs[0].database == dir / "x.mol2");
    CHECK(specs[0].index == dir / "x.mol2.idx");
    CHECK(specs[1].database == "/abs/y.mol2");
    CHECK(specs[1].index == dir / "y.idx");
    write_file(dir / "bad", "a\n");
    CHECK_THROWS(read_server_catalog(dir / "bad"));
  }
}

TEST_SUITE("replica selection")
{
  TEST_CASE("lowest latency picks the faster server")
  {
    Fixture fast(4, std::chrono::milliseconds{5});
    Fixture slow(4, std::chrono::milliseconds{40});
    ReplicaCatalogue catalogue;
    catalogue.add("aldrich", {slow.server->endpoint(), 1.0, {}});
    catalogue.add("aldrich", {fast.server->endpoint(), 9.0, {}});
    probe_replicas(catalogue, "aldrich");
    CHECK(select_replica(catalogue, "aldrich", SelectionPolicy::lowest_latency()) == fast.server->endpoint());
    CHECK(select_replica(catalogue, "aldrich", SelectionPolicy::lowest_cost()) == slow.server->endpoint());
  }

  TEST_CASE("catalogue parsing and errors")
  {
    auto c = ReplicaCatalogue::parse("# replicas\naldrich a:1 cost=2\naldrich b:2\nnci c:3 cost=0.5\n");
    CHECK(c.databases() == std::vector<std::string>{"aldrich", "nci"});
    REQUIRE(c.replicas("aldrich").size() == 2);
    CHECK(*c.replicas("aldrich")[0].declared_cost == 2.0);
    CHECK_FALSE(c.replicas("aldrich")[1].declared_cost);
    CHECK_THROWS_AS(c.add("aldrich", {Endpoint{"a", 1}, {}, {}}), ReplicaError);
    CHECK_THROWS_AS(select_replica(c, "none", SelectionPolicy::lowest_cost()), ReplicaError);
    CHECK_THROWS_AS(select_replica(c, "aldrich", SelectionPolicy::lowest_latency()), ReplicaError);
    CHECK(SelectionPolicy::parse("weighted:0.25").alpha == 0.25);
    CHECK_THROWS(SelectionPolicy::parse("weighted:2"));
  }

  TEST_CASE("singleton, unreachable replicas and ties")
  {
    ReplicaCatalogue one;
    one.add("db", {Endpoint{"h", 1}, 5.0, {}});
    probe_replicas(one, "db", [](const Endpoint &) -> double { throw std::runtime_error("down"); });
    CHECK_THROWS_AS(select_replica(one, "db", SelectionPolicy::lowest_latency()), ReplicaError);
    CHECK(select_replica(one, "db", SelectionPolicy::lowest_cost()) == Endpoint{"h", 1});

    ReplicaCatalogue c;
    c.add("db", {Endpoint{"b", 1}, 1.0, {}});
    c.add("db", {Endpoint{"a", 1}, 1.0, {}});
    c.add("db", {Endpoint{"c", 1}, 1.0, {}});
    probe_replicas(c, "db", [](const Endpoint & e) {
      if (e.host == "c") {
        throw std::runtime_error("down");
      }
      return 0.01;
    });
    CHECK(select_replica(c, "db", SelectionPolicy::lowest_latency()) == Endpoint{"a", 1});
    CHECK(select_replica(c, "db", SelectionPolicy::weighted(0.5)) == Endpoint{"a", 1});
  }

  TEST_CASE("weighted selection properties")
  {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.001, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
      const auto n = 1 + rng() % 6;
      std::vector<double> latency(n);
      std::vector<double> cost(n);
      ReplicaCatalogue c;
      for (std::size_t i = 0; i < n; ++i) {
        latency[i] = u(rng);
        cost[i] = std::floor(u(rng) * 10);
        c.add("db", {Endpoint{"h" + std::to_string(i), 1}, cost[i], latency[i]});
      }
      // alpha 0 is pure cost, alpha 1 pure latency.
      CHECK(select_replica(c, "db", SelectionPolicy::weighted(0.0)) ==
            select_replica(c, "db", SelectionPolicy::lowest_cost()));
      CHECK(select_replica(c, "db", SelectionPolicy::weighted(1.0)) ==
            select_replica(c, "db", SelectionPolicy::lowest_latency()));

      // Positive affine rescaling of either axis leaves the choice unchanged.
      const double scale = 1 + 9 * u(rng);
      const double shift = u(rng);
      ReplicaCatalogue scaled;
      for (std::size_t i = 0; i < n; ++i) {
        scaled.add("db", {Endpoint{"h" + std::to_string(i), 1}, cost[i] * scale + shift, latency[i] * 3 + 0.5});
      }
      const double alpha = u(rng);
      CHECK(select_replica(c, "db", SelectionPolicy::weighted(alpha)) ==
            select_replica(scaled, "db", SelectionPolicy::weighted(alpha)));

      // The winner is never dominated on both axes.
      const auto best = select_replica(c, "db", SelectionPolicy::weighted(alpha));
      const auto & reps = c.replicas("db");
      const auto it = std::find_if(reps.begin(), reps.end(), [&](const ReplicaInfo & r) { return r.endpoint == best; });
      for (const auto & r : reps) {
        CHECK_FALSE((*r.declared_cost < *it->declared_cost && *r.last_probe < *it->last_probe));
      }
    }
  }
}
