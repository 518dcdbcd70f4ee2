// agent.hpp - per-node agent deployment and the main-task pipeline.
#pragma once

#include "vlab/fabric/simulator.hpp"
#include "vlab/plan_lang.hpp"
#include "vlab/run_gen.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace vlab::fabric
{

enum class Mode { sim, local };

struct AgentState
{
  std::string resource;
  bool nodestart_done = false;
  std::set<std::string> staged_files;
  /// False when a nodestart command failed; the resource must not get jobs.
  bool usable = true;
  std::string error;
  /// How many times the nodestart task actually ran (0 or 1).
  int nodestart_runs = 0;
  /// Local mode: <root>/.vlab/nodes/<resource>.
  std::filesystem::path node_dir;
};

/// Where and as whom local jobs run.
struct LocalContext
{
  /// Directory the plan's relative paths resolve against; results land here.
  std::filesystem::path root;
  std::string home;
  std::string os;
  std::chrono::steady_clock::time_point epoch = std::chrono::steady_clock::now();
};

/// Lowercase operating system name of this host, e.g. "linux".
std::string host_os();

/// Name a `copy <src> node:<dst>` command gives the staged file.
std::string staged_name(const plan::CopyToNode & copy);

/// Job bindings plus the pseudo-parameters HOME, OS and jobname.
plan::Bindings job_bindings(const rungen::JobSpec & job, const std::string & home, const std::string & os);

/// Result paths the main task copies back for a job, after substitution.
std::vector<std::string> expected_outputs(const plan::PlanFile & plan, const plan::Bindings & bindings);

/// Runs the plan's nodestart task once for the agent's node. A second call
/// is a no-op. Sim mode records the staged names without touching files;
/// local mode executes the commands into the node's staging directory.
void deploy_agent(AgentState & agent, const plan::PlanFile & plan, Mode mode, const LocalContext * local = nullptr);

/// Shared between a local job's worker and the driver.
struct JobControl
{
  std::atomic<bool> kill{false};
  /// CPU seconds consumed so far by the job's processes.
  std::atomic<double> cpu_used{0.0};
};

/// Local mode: executes the main task for `job` in a fresh job directory
/// seeded with the node's staged files. Stops at the first failing command;
/// result files are only copied by commands that are reached.
ExecutionRecord run_job_local(
  const AgentState & agent, const rungen::JobSpec & job, const plan::PlanFile & plan, const LocalContext & context,
  JobControl & control, int attempt);

}  // namespace vlab::fabric
