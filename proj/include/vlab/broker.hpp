// broker.hpp - deadline and budget constrained task farming.
//
// The broker owns the schedule ledger: which jobs are pending, running and
// done, what has been spent, and how fast each resource has been finishing
// work. Allocation is a pure function of that ledger; a driver (simulated or
// local fabric) commits assignments, feeds completions back and asks for the
// constraint status between ticks.
//
// Budget safety rests on reservations. Every dispatched job carries a CPU
// lease; the ledger reserves price x lease for it and the fabric never lets a
// job consume more CPU than its lease. Leases are extended on request while
// the residual budget allows, so spent <= spent + reserved <= budget holds at
// every instant.
#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vlab::broker
{

struct ResourceDesc
{
  std::string name;
  int cpus = 1;
  /// G$ per CPU-second.
  double price = 0.0;
  /// Opaque handle into the fabric.
  std::size_t endpoint = 0;
};

enum class Strategy { time_opt, cost_opt };

std::string_view to_string(Strategy strategy);
/// "time" / "cost"; throws std::invalid_argument.
Strategy parse_strategy(std::string_view text);

struct ExperimentConfig
{
  double deadline = 3600.0;
  double budget = 50000.0;
  Strategy strategy = Strategy::time_opt;
  double tick_interval = 10.0;
  /// Seconds per job assumed before a resource has completed anything.
  double default_job_time = 60.0;
  /// Trailing history used for throughput estimates.
  double rate_window = 600.0;
  /// Cost-opt keeps this fraction of the remaining time in reserve.
  double safety_margin = 0.10;
  /// Cost-opt may engage every tier before this time; defaults to 10% of the deadline.
  std::optional<double> warmup_window;
  int max_retries = 3;

  double warmup() const { return warmup_window.value_or(0.1 * deadline); }
};

class BrokerError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Throws BrokerError unless deadline > 0, budget > 0 and intervals are positive.
void validate(const ExperimentConfig & config);
void validate(const ResourceDesc & resource);

// ---------------------------------------------------------------------------
// Throughput estimation

struct ResourceHistory
{
  int cpus = 1;
  std::optional<double> first_dispatch;
  /// Completion times, ascending.
  std::vector<double> completions;
};

struct RateEstimate
{
  std::string resource;
  double jobs_per_second = 0.0;
  /// Seconds of history actually used.
  double window = 0.0;
  std::size_t completed_in_window = 0;
  /// Optimistic cpus / default_job_time because nothing has completed yet.
  bool prior = false;
  /// Earlier completions exist but none fell inside the window.
  bool stalled = false;
};

/// Completions in (clock - w, clock] divided by w, where w is the window
/// clipped to the time since the first dispatch.
RateEstimate estimate_rate(
  const ResourceHistory & history, std::string_view resource, double window, double clock, double default_job_time);

// ---------------------------------------------------------------------------
// Schedule ledger

enum class JobStatus { pending, running, done, failed };
enum class Status { running, completed, deadline_missed, budget_exhausted };

std::string_view to_string(Status status);
inline bool is_terminal(Status s) { return s != Status::running; }

struct JobEntry
{
  std::string name;
  JobStatus status = JobStatus::pending;
  std::optional<std::size_t> resource;
  int failures = 0;
  /// CPU seconds granted on the current dispatch.
  double lease = 0.0;
  /// G$ held back for the current dispatch.
  double reserved = 0.0;
  double dispatched_at = 0.0;
};

struct ResourceLedger
{
  ResourceDesc desc;
  /// Jobs currently held by the resource, running or done: done + running.
  int assigned = 0;
  int running = 0;
  int done = 0;
  int failures = 0;
  double spent = 0.0;
  ResourceHistory history;
  /// Last non-zero measured throughput, used while the resource sits idle.
  double last_rate = 0.0;

  int free_slots() const { return desc.cpus - running; }
};

struct ScheduleState
{
  double clock = 0.0;
  std::vector<JobEntry> jobs;
  std::deque<std::size_t> pending;
  std::size_t running = 0;
  std::size_t done = 0;
  std::size_t failed = 0;
  double spent = 0.0;
  double reserved = 0.0;
  Status status = Status::running;
  double finish_time = 0.0;
  std::vector<ResourceLedger> resources;

  double committed() const { return spent + reserved; }

  static ScheduleState create(const std::vector<std::string> & jobnames, const std::vector<ResourceDesc> & resources);
};

/// How the broker currently sees one resource.
struct ResourceOutlook
{
  double rate = 0.0;
  double expected_job_time = 0.0;
  double projected_cost = 0.0;
  bool prior = false;
  bool stalled = false;
};

ResourceOutlook outlook(const ScheduleState & state, std::size_t resource, const ExperimentConfig & config);

struct Assignment
{
  std::size_t job = 0;
  std::size_t resource = 0;
  double projected_cost = 0.0;
  /// Initial CPU lease; infinite for free resources.
  double lease = 0.0;

  friend bool operator==(const Assignment &, const Assignment &) = default;
};

/// Fills every free slot, fastest resources first, skipping assignments the
/// residual budget cannot cover.
std::vector<Assignment> allocate_time_opt(const ScheduleState & state, const ExperimentConfig & config);

/// Fills the cheapest tier first and engages dearer tiers only while the
/// projected finish misses the deadline less its safety margin, or during warmup.
std::vector<Assignment> allocate_cost_opt(const ScheduleState & state, const ExperimentConfig & config);

std::vector<Assignment> allocate(const ScheduleState & state, const ExperimentConfig & config);

/// Commits assignments: pending -> running, reservations taken.
void apply(ScheduleState & state, const std::vector<Assignment> & assignments);

struct Completion
{
  std::size_t job = 0;
  std::size_t resource = 0;
  double cpu_seconds = 0.0;
  bool ok = true;
  /// Stopped because its lease could not be extended; re-queued without
  /// counting against the retry limit.
  bool lease_exhausted = false;
  double time = 0.0;
};

/// Charges cpu_seconds x price, moves the job on and records throughput.
/// Throws BrokerError if the job is not running on that resource.
void account(ScheduleState & state, const Completion & completion, const ExperimentConfig & config);

/// Charges a job stopped because the experiment ended and returns it to
/// pending. The job does not count as failed.
void abandon(ScheduleState & state, std::size_t job, double cpu_seconds);

/// Extra CPU seconds granted to a running job whose lease ran out; 0 means
/// the residual budget cannot cover more and the job must stop.
double extend_lease(ScheduleState & state, std::size_t job, const ExperimentConfig & config);

/// Updates and returns the status at state.clock. Terminal states stick.
Status check_constraints(ScheduleState & state, const ExperimentConfig & config);

/// True when `cost` more can be committed without exceeding the budget.
bool affordable(const ScheduleState & state, double cost, const ExperimentConfig & config);

// ---------------------------------------------------------------------------
// Reporting

struct ResourceReport
{
  std::string name;
  double price = 0.0;
  int jobs = 0;
  double spent = 0.0;
};

struct Report
{
  std::vector<ResourceReport> resources;
  std::size_t completed = 0;
  std::size_t failed = 0;
  double total_cost = 0.0;
  double finish_seconds = 0.0;
  Status status = Status::completed;
};

/// Throws BrokerError unless the state is terminal.
Report make_report(const ScheduleState & state);
std::string format_report_text(const Report & report);
std::string format_report_csv(const Report & report);

}  // namespace vlab::broker
