// experiment.hpp - broker loop over the simulated or local fabric, and traces.
#pragma once

#include "vlab/broker.hpp"
#include "vlab/fabric/agent.hpp"
#include "vlab/fabric/testbed.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace vlab::fabric
{

struct TraceRow
{
  double t = 0.0;
  std::string resource;
  int jobs_done = 0;
  int jobs_running = 0;
  double spent = 0.0;
};

inline constexpr std::string_view trace_header = "t_sec,resource,jobs_done,jobs_running,spent_gd";

/// Appends one row per resource for the state as it stands.
void emit_trace(const broker::ScheduleState & state, std::vector<TraceRow> & rows);
std::string format_trace(const std::vector<TraceRow> & rows);

struct ExperimentOptions
{
  broker::ExperimentConfig config;
  std::uint64_t seed = 0;
  /// Simulated runs stop at this virtual time even if work remains.
  double horizon = std::numeric_limits<double>::infinity();
  /// Called after every event is folded into the state.
  std::function<void(const broker::ScheduleState &)> observer;
};

struct LocalOptions
{
  LocalContext context;
  /// Seconds between polls of the completion queue.
  double poll_interval = 0.05;
};

struct ExperimentResult
{
  broker::ScheduleState state;
  broker::Report report;
  std::vector<TraceRow> trace;
  std::vector<ExecutionRecord> records;
  std::vector<AgentState> agents;
  std::string event_log;
  bool truncated = false;
  std::vector<std::string> warnings;
};

ExperimentResult run_sim_experiment(
  const plan::PlanFile & plan, const std::vector<rungen::JobSpec> & jobs, const Testbed & testbed,
  const ExperimentOptions & options);

/// Runs real processes; the broker clock is wall seconds since the start.
/// Service models, fetch latencies and failure rates in the testbed are ignored.
ExperimentResult run_local_experiment(
  const plan::PlanFile & plan, const std::vector<rungen::JobSpec> & jobs, const Testbed & testbed,
  const ExperimentOptions & options, const LocalOptions & local);

}  // namespace vlab::fabric
