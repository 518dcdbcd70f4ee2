// replica.hpp - replica catalogue and best-replica selection.
#pragma once

#include "vlab/cdb/client.hpp"
#include "vlab/cdb/protocol.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vlab::cdb
{

struct ReplicaInfo
{
  Endpoint endpoint;
  /// G$ per request; replicas without one count as free.
  std::optional<double> declared_cost;
  /// Round-trip seconds from the most recent probe; infinity when the probe failed.
  std::optional<double> last_probe;
};

class ReplicaError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class ReplicaCatalogue
{
public:
  /// Throws ReplicaError when the endpoint is already registered for `database`.
  void add(const std::string & database, ReplicaInfo replica);
  const std::vector<ReplicaInfo> & replicas(std::string_view database) const;
  std::vector<ReplicaInfo> & replicas(std::string_view database);
  std::vector<std::string> databases() const;

  /// Lines `<database> <host>:<port> [cost=<G$>]`; `#` starts a comment.
  static ReplicaCatalogue parse(std::string_view text);
  static ReplicaCatalogue load(const std::filesystem::path & path);

private:
  std::map<std::string, std::vector<ReplicaInfo>, std::less<>> entries_;
};

struct SelectionPolicy
{
  enum class Kind { lowest_latency, lowest_cost, weighted };
  Kind kind = Kind::lowest_latency;
  /// Weight of normalized latency against normalized cost; weighted only.
  double alpha = 0.5;

  static SelectionPolicy lowest_latency() { return {Kind::lowest_latency, 1.0}; }
  static SelectionPolicy lowest_cost() { return {Kind::lowest_cost, 0.0}; }
  static SelectionPolicy weighted(double alpha) { return {Kind::weighted, alpha}; }
  /// `latency`, `cost` or `weighted:<alpha>`.
  static SelectionPolicy parse(std::string_view text);

  bool needs_probes() const { return kind == Kind::lowest_latency || (kind == Kind::weighted && alpha > 0); }
};

/// Pings every replica of `database` once and records the round trip.
using Prober = std::function<double(const Endpoint &)>;
void probe_replicas(ReplicaCatalogue & catalogue, std::string_view database, const Prober & prober);
void probe_replicas(ReplicaCatalogue & catalogue, std::string_view database, ClientOptions options = {});

/// Best endpoint for `database` under `policy`; ties go to the
/// lexicographically smallest `host:port`.
Endpoint select_replica(const ReplicaCatalogue & catalogue, std::string_view database, const SelectionPolicy & policy);

}  // namespace vlab::cdb
