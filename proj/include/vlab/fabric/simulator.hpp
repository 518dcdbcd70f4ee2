// simulator.hpp - deterministic discrete-event grid.
//
// Jobs are single-CPU. A dispatched job waits in its resource's queue until a
// CPU is free and the resource is available, spends its fetch latency, then
// consumes its sampled CPU time. Availability gaps suspend running jobs in
// place. Each job carries a CPU lease; when it runs out the simulator stops
// the clock on that job and reports lease_expired so the caller can extend
// or terminate it.
#pragma once

#include "vlab/fabric/testbed.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

namespace vlab::fabric
{

struct ExecutionRecord
{
  std::string job;
  std::string resource;
  double start = 0.0;
  double end = 0.0;
  double cpu_seconds = 0.0;
  enum class Outcome { ok, failed };
  Outcome outcome = Outcome::ok;
  std::vector<std::string> outputs;
};

struct SimEvent
{
  enum class Kind { tick, finished, lease_expired };
  Kind kind = Kind::tick;
  double time = 0.0;
  std::size_t job = 0;
  std::size_t resource = 0;
  /// Filled for finished events.
  ExecutionRecord record;
};

class SimError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class GridSimulator
{
public:
  GridSimulator(std::vector<SimResource> resources, std::uint64_t experiment_seed);

  double now() const { return now_; }
  const std::vector<SimResource> & resources() const { return resources_; }

  /// Queues `job` on `resource` at the current time. `outputs` are the names
  /// reported on success.
  void dispatch(
    std::size_t job, const std::string & jobname, std::size_t resource, double lease,
    std::vector<std::string> outputs = {});
  void extend(std::size_t job, double extra_cpu_seconds);
  /// Stops a dispatched job now and returns what it consumed.
  ExecutionRecord terminate(std::size_t job);
  void schedule_tick(double at);

  /// Advances to and returns the next event at or before `horizon`. Returns
  /// nothing when the queue is empty or the next event lies beyond the
  /// horizon; the latter sets truncated().
  std::optional<SimEvent> next(double horizon = std::numeric_limits<double>::infinity());

  bool truncated() const { return truncated_; }
  int running_on(std::size_t resource) const;
  int waiting_on(std::size_t resource) const;
  std::size_t active_jobs() const { return jobs_.size(); }
  /// One line per state change, fixed precision.
  const std::string & event_log() const { return log_; }

private:
  enum class Phase { waiting, running, suspended, held };

  struct Job
  {
    std::string name;
    std::size_t resource = 0;
    Phase phase = Phase::waiting;
    double fetch_left = 0.0;
    double cpu_left = 0.0;
    double cpu_used = 0.0;
    double lease = 0.0;
    bool will_fail = false;
    double start = -1.0;
    double resumed_at = 0.0;
    std::uint64_t generation = 0;
    std::vector<std::string> outputs;
  };

  struct Pending
  {
    double time;
    std::uint64_t seq;
    enum class Kind { tick, job, availability } kind;
    std::size_t target;
    std::uint64_t generation;

    bool operator>(const Pending & o) const { return time != o.time ? time > o.time : seq > o.seq; }
  };

  struct Slot
  {
    int running = 0;
    std::vector<std::size_t> waiting;
    bool available = true;
  };

  void push(double time, Pending::Kind kind, std::size_t target, std::uint64_t generation);
  void log(const char * what, const Job * job, std::size_t resource, double extra = -1.0);
  void advance(Job & job);
  void resume(std::size_t id);
  void schedule_job(std::size_t id);
  void start_waiting(std::size_t resource);
  void release(std::size_t resource);

  std::vector<SimResource> resources_;
  std::vector<std::mt19937_64> rngs_;
  std::vector<Slot> slots_;
  std::map<std::size_t, Job> jobs_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
  bool truncated_ = false;
  std::string log_;
};

}  // namespace vlab::fabric
