#include "vlab/cdb/replica.hpp"

#include "vlab/digest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace vlab::cdb
{

namespace
{

const std::vector<ReplicaInfo> no_replicas;

std::optional<double> parse_double(std::string_view text)
{
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    return std::nullopt;
  }
  return v;
}

// Maps values onto [0, 1] across the candidate set; a constant set maps to 0.
std::vector<double> normalize(const std::vector<double> & values)
{
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  std::vector<double> out(values.size(), 0.0);
  if (*hi > *lo) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      out[i] = (values[i] - *lo) / (*hi - *lo);
    }
  }
  return out;
}

}  // namespace

void ReplicaCatalogue::add(const std::string & database, ReplicaInfo replica)
{
  auto & list = entries_[database];
  for (const auto & r : list) {
    if (r.endpoint == replica.endpoint) {
      throw ReplicaError("replica " + replica.endpoint.to_string() + " already registered for " + database);
    }
  }
  list.push_back(std::move(replica));
}

const std::vector<ReplicaInfo> & ReplicaCatalogue::replicas(std::string_view database) const
{
  auto it = entries_.find(database);
  return it == entries_.end() ? no_replicas : it->second;
}

std::vector<ReplicaInfo> & ReplicaCatalogue::replicas(std::string_view database)
{
  auto it = entries_.find(database);
  if (it == entries_.end()) {
    throw ReplicaError("no replica registered for " + std::string(database));
  }
  return it->second;
}

std::vector<std::string> ReplicaCatalogue::databases() const
{
  std::vector<std::string> out;
  for (const auto & [name, list] : entries_) {
    out.push_back(name);
  }
  return out;
}

ReplicaCatalogue ReplicaCatalogue::parse(std::string_view text)
{
  ReplicaCatalogue catalogue;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream words(line);
    std::string database;
    std::string endpoint;
    if (!(words >> database)) {
      continue;
    }
    const auto where = "catalogue line " + std::to_string(line_no) + ": ";
    if (!(words >> endpoint)) {
      throw ReplicaError(where + "expected <database> <host>:<port> [cost=<G$>]");
    }
    ReplicaInfo info;
    try {
      info.endpoint = Endpoint::parse(endpoint);
    } catch (const std::invalid_argument & e) {
      throw ReplicaError(where + e.what());
    }
    std::string option;
    while (words >> option) {
      if (option.rfind("cost=", 0) != 0) {
        throw ReplicaError(where + "unknown option '" + option + "'");
      }
      auto cost = parse_double(std::string_view(option).substr(5));
      if (!cost || *cost < 0) {
        throw ReplicaError(where + "bad cost '" + option + "'");
      }
      info.declared_cost = cost;
    }
    try {
      catalogue.add(database, std::move(info));
    } catch (const ReplicaError & e) {
      throw ReplicaError(where + e.what());
    }
  }
  return catalogue;
}

ReplicaCatalogue ReplicaCatalogue::load(const std::filesystem::path & path)
{
  return parse(read_file(path));
}

SelectionPolicy SelectionPolicy::parse(std::string_view text)
{
  if (text == "latency") {
    return lowest_latency();
  }
  if (text == "cost") {
    return lowest_cost();
  }
  if (text.rfind("weighted:", 0) == 0) {
    auto alpha = parse_double(text.substr(9));
    if (alpha && *alpha >= 0 && *alpha <= 1) {
      return weighted(*alpha);
    }
  }
  throw ReplicaError("policy must be latency, cost or weighted:<alpha in [0,1]>, got '" + std::string(text) + "'");
}

void probe_replicas(ReplicaCatalogue & catalogue, std::string_view database, const Prober & prober)
{
  for (auto & replica : catalogue.replicas(database)) {
    try {
      replica.last_probe = prober(replica.endpoint);
    } catch (const std::exception &) {
      replica.last_probe = std::numeric_limits<double>::infinity();
    }
  }
}

void probe_replicas(ReplicaCatalogue & catalogue, std::string_view database, ClientOptions options)
{
  probe_replicas(catalogue, database, [options](const Endpoint & endpoint) {
    CdbClient client(endpoint, options);
    return client.ping();
  });
}

Endpoint select_replica(const ReplicaCatalogue & catalogue, std::string_view database, const SelectionPolicy & policy)
{
  const auto & all = catalogue.replicas(database);
  if (all.empty()) {
    throw ReplicaError("no replica registered for " + std::string(database));
  }
  std::vector<const ReplicaInfo *> candidates;
  for (const auto & r : all) {
    if (policy.needs_probes()) {
      if (!r.last_probe) {
        throw ReplicaError("replica " + r.endpoint.to_string() + " has not been probed");
      }
      if (std::isinf(*r.last_probe)) {
        continue;
      }
    }
    candidates.push_back(&r);
  }
  if (candidates.empty()) {
    throw ReplicaError("no reachable replica for " + std::string(database));
  }

  std::vector<double> score(candidates.size());
  if (policy.kind == SelectionPolicy::Kind::lowest_latency) {
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      score[i] = *candidates[i]->last_probe;
    }
  } else {
    std::vector<double> cost(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      cost[i] = candidates[i]->declared_cost.value_or(0.0);
    }
    if (policy.kind == SelectionPolicy::Kind::lowest_cost) {
      score = cost;
    } else {
      const auto cost_n = normalize(cost);
      std::vector<double> latency_n(candidates.size(), 0.0);
      if (policy.alpha > 0) {
        std::vector<double> latency(candidates.size());
        for (std::size_t i = 0; i < candidates.size(); ++i) {
          latency[i] = *candidates[i]->last_probe;
        }
        latency_n = normalize(latency);
      }
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        score[i] = policy.alpha * latency_n[i] + (1.0 - policy.alpha) * cost_n[i];
      }
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (score[i] < score[best] ||
        (score[i] == score[best] && candidates[i]->endpoint.to_string() < candidates[best]->endpoint.to_string())) {
      best = i;
    }
  }
  return candidates[best]->endpoint;
}

}  // namespace vlab::cdb
