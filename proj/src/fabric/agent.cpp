#include "vlab/fabric/agent.hpp"

#include "vlab/digest.hpp"

#include <cerrno>
#include <cctype>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <sstream>
#include <signal.h>
#include <spawn.h>
#include <sys/resource.h>
#include <sys/utsname.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

extern char ** environ;

namespace vlab::fabric
{

namespace fs = std::filesystem;

namespace
{

struct StepFailure : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

double seconds_since(std::chrono::steady_clock::time_point epoch)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch).count();
}

// utime + stime of a live process, from /proc.
double process_cpu(pid_t pid)
{
  std::ifstream in("/proc/" + std::to_string(pid) + "/stat");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto close = text.rfind(')');
  if (close == std::string::npos) {
    return 0.0;
  }
  std::istringstream fields(text.substr(close + 2));
  std::string field;
  unsigned long long utime = 0;
  unsigned long long stime = 0;
  // Fields after the command name start at "state" (field 3).
  for (int i = 3; i <= 15 && fields >> field; ++i) {
    if (i == 14) {
      utime = std::stoull(field);
    } else if (i == 15) {
      stime = std::stoull(field);
    }
  }
  return static_cast<double>(utime + stime) / static_cast<double>(sysconf(_SC_CLK_TCK));
}

void copy_into(const fs::path & from, const fs::path & to)
{
  std::error_code ec;
  if (!fs::exists(from, ec)) {
    throw StepFailure("copy source " + from.string() + " does not exist");
  }
  fs::path target = to;
  if (fs::is_directory(target, ec)) {
    target /= from.filename();
  }
  if (target.has_parent_path()) {
    fs::create_directories(target.parent_path(), ec);
  }
  fs::copy(from, target, fs::copy_options::overwrite_existing | fs::copy_options::recursive, ec);
  if (ec) {
    throw StepFailure("copy " + from.string() + " -> " + target.string() + ": " + ec.message());
  }
}

std::string subst(std::string_view text, const plan::Bindings & bindings)
{
  try {
    return plan::substitute(text, bindings);
  } catch (const plan::SubstitutionError & e) {
    throw StepFailure(e.what());
  }
}

// Runs argv in `cwd` with output appended to `log`; returns the exit status
// and adds the child's CPU time to control.cpu_used.
int spawn_and_wait(const std::vector<std::string> & argv, const fs::path & cwd, const fs::path & log, JobControl & control)
{
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addchdir_np(&actions, cwd.c_str());
  posix_spawn_file_actions_addopen(&actions, 1, log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  posix_spawn_file_actions_adddup2(&actions, 1, 2);
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);

  std::vector<char *> args;
  for (const auto & a : argv) {
    args.push_back(const_cast<char *>(a.c_str()));
  }
  args.push_back(nullptr);
  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, args[0], &actions, &attr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  if (rc != 0) {
    throw StepFailure("cannot execute " + argv[0] + ": " + std::strerror(rc));
  }

  const double before = control.cpu_used.load();
  int status = 0;
  rusage usage{};
  int polls = 0;
  while (true) {
    const pid_t r = wait4(pid, &status, WNOHANG, &usage);
    if (r == pid) {
      break;
    }
    if (r < 0 && errno != EINTR) {
      throw StepFailure(std::string("wait failed: ") + std::strerror(errno));
    }
    if (control.kill.load()) {
      ::kill(-pid, SIGKILL);
      while (wait4(pid, &status, 0, &usage) < 0 && errno == EINTR) {
      }
      break;
    }
    if (++polls % 4 == 0) {
      control.cpu_used.store(before + process_cpu(pid));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  const double cpu = static_cast<double>(usage.ru_utime.tv_sec + usage.ru_stime.tv_sec) +
                     1e-6 * static_cast<double>(usage.ru_utime.tv_usec + usage.ru_stime.tv_usec);
  control.cpu_used.store(before + cpu);
  if (control.kill.load()) {
    throw StepFailure("killed");
  }
  if (WIFEXITED(status)) {
    return WEXITSTATUS(status);
  }
  return 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
}

// Executes one task command. `workdir` is the node side, `root` the
// submitting side.
void run_command(
  const plan::Command & command, const plan::Bindings & bindings, const fs::path & root, const fs::path & workdir,
  const fs::path & log, JobControl & control, std::vector<std::string> * copied_back)
{
  std::visit(
    [&](const auto & c) {
      using T = std::decay_t<decltype(c)>;
      if constexpr (std::is_same_v<T, plan::CopyToNode>) {
        const auto dst = c.dst == "." ? fs::path(subst(c.src, bindings)).filename() : fs::path(subst(c.dst, bindings));
        copy_into(root / subst(c.src, bindings), workdir / dst);
      } else if constexpr (std::is_same_v<T, plan::CopyFromNode>) {
        const auto dst = subst(c.dst, bindings);
        copy_into(workdir / subst(c.src, bindings), root / dst);
        if (copied_back) {
          copied_back->push_back(fs::path(dst).lexically_normal().string());
        }
      } else if constexpr (std::is_same_v<T, plan::Substitute>) {
        const auto & base = c.on_node ? workdir : root;
        std::string text;
        try {
          text = read_file(base / subst(c.input, bindings));
        } catch (const std::exception & e) {
          throw StepFailure(e.what());
        }
        write_file(base / subst(c.output, bindings), subst(text, bindings));
      } else {
        std::vector<std::string> argv;
        for (const auto & a : c.argv) {
          argv.push_back(subst(a, bindings));
        }
        const int code = spawn_and_wait(argv, c.on_node ? workdir : root, log, control);
        if (code != 0) {
          throw StepFailure(argv[0] + " exited with status " + std::to_string(code));
        }
      }
    },
    command.action);
}

}  // namespace

std::string host_os()
{
  utsname info{};
  if (uname(&info) != 0) {
    return "unknown";
  }
  std::string name = info.sysname;
  for (auto & ch : name) {
    ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  return name;
}

std::string staged_name(const plan::CopyToNode & copy)
{
  if (copy.dst == "." || copy.dst.empty()) {
    return fs::path(copy.src).filename().string();
  }
  return fs::path(copy.dst).lexically_normal().string();
}

plan::Bindings job_bindings(const rungen::JobSpec & job, const std::string & home, const std::string & os)
{
  auto b = job.as_bindings();
  b["HOME"] = home;
  b["OS"] = os;
  b["jobname"] = job.jobname;
  return b;
}

std::vector<std::string> expected_outputs(const plan::PlanFile & plan, const plan::Bindings & bindings)
{
  std::vector<std::string> out;
  if (const auto * main = plan.find_task(plan::TaskKind::main)) {
    for (const auto & command : main->commands) {
      if (const auto * c = std::get_if<plan::CopyFromNode>(&command.action)) {
        out.push_back(fs::path(plan::substitute(c->dst, bindings)).lexically_normal().string());
      }
    }
  }
  return out;
}

void deploy_agent(AgentState & agent, const plan::PlanFile & plan, Mode mode, const LocalContext * local)
{
  if (agent.nodestart_done || !agent.usable) {
    return;
  }
  const auto * task = plan.find_task(plan::TaskKind::nodestart);
  if (mode == Mode::local) {
    if (!local) {
      throw std::invalid_argument("local deployment needs a context");
    }
    agent.node_dir = local->root / ".vlab" / "nodes" / agent.resource;
    fs::create_directories(agent.node_dir / "stage");
    fs::create_directories(agent.node_dir / "jobs");
  }
  if (task) {
    ++agent.nodestart_runs;
    plan::Bindings bindings;
    if (local) {
      bindings["HOME"] = local->home;
      bindings["OS"] = local->os;
    }
    JobControl control;
    for (const auto & command : task->commands) {
      if (const auto * copy = std::get_if<plan::CopyToNode>(&command.action)) {
        agent.staged_files.insert(staged_name(*copy));
      }
      if (mode == Mode::sim) {
        continue;
      }
      try {
        run_command(command, bindings, local->root, agent.node_dir / "stage", agent.node_dir / "nodestart.log", control,
          nullptr);
      } catch (const std::exception & e) {
        agent.usable = false;
        agent.error = "nodestart line " + std::to_string(command.line.value) + ": " + e.what();
        return;
      }
    }
  }
  agent.nodestart_done = true;
}

ExecutionRecord run_job_local(
  const AgentState & agent, const rungen::JobSpec & job, const plan::PlanFile & plan, const LocalContext & context,
  JobControl & control, int attempt)
{
  ExecutionRecord rec;
  rec.job = job.jobname;
  rec.resource = agent.resource;
  rec.start = seconds_since(context.epoch);
  rec.outcome = ExecutionRecord::Outcome::failed;
  if (!agent.nodestart_done || !agent.usable) {
    rec.end = rec.start;
    return rec;
  }
  const auto dir = agent.node_dir / "jobs" / (job.jobname + "." + std::to_string(attempt));
  const auto log = dir / "job.log";
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir);
  try {
    for (const auto & entry : fs::directory_iterator(agent.node_dir / "stage")) {
      fs::copy(entry.path(), dir / entry.path().filename(), fs::copy_options::recursive);
    }
    const auto bindings = job_bindings(job, context.home, context.os);
    std::vector<std::string> outputs;
    if (const auto * main = plan.find_task(plan::TaskKind::main)) {
      for (const auto & command : main->commands) {
        run_command(command, bindings, context.root, dir, log, control, &outputs);
      }
    }
    rec.outputs = std::move(outputs);
    rec.outcome = ExecutionRecord::Outcome::ok;
  } catch (const std::exception & e) {
    std::ofstream(log, std::ios::app) << "vlab: " << e.what() << '\n';
  }
  rec.cpu_seconds = control.cpu_used.load();
  rec.end = seconds_since(context.epoch);
  return rec;
}

}  // namespace vlab::fabric
