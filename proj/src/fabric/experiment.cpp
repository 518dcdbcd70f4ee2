#include "vlab/fabric/experiment.hpp"

#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

namespace vlab::fabric
{

namespace
{

constexpr double inf = std::numeric_limits<double>::infinity();

std::vector<std::string> jobnames(const std::vector<rungen::JobSpec> & jobs)
{
  std::vector<std::string> names;
  names.reserve(jobs.size());
  for (const auto & j : jobs) {
    names.push_back(j.jobname);
  }
  return names;
}

void notify(const ExperimentOptions & options, const broker::ScheduleState & state)
{
  if (options.observer) {
    options.observer(state);
  }
}

broker::Completion completion(std::size_t job, std::size_t resource, const ExecutionRecord & rec, double time)
{
  broker::Completion c;
  c.job = job;
  c.resource = resource;
  c.cpu_seconds = rec.cpu_seconds;
  c.ok = rec.outcome == ExecutionRecord::Outcome::ok;
  c.time = time;
  return c;
}

}  // namespace

void emit_trace(const broker::ScheduleState & state, std::vector<TraceRow> & rows)
{
  for (const auto & r : state.resources) {
    rows.push_back(TraceRow{state.clock, r.desc.name, r.done, r.running, r.spent});
  }
}

std::string format_trace(const std::vector<TraceRow> & rows)
{
  std::string out(trace_header);
  out += '\n';
  char buf[256];
  for (const auto & row : rows) {
    std::snprintf(buf, sizeof(buf), "%.3f,%s,%d,%d,%.2f\n", row.t, row.resource.c_str(), row.jobs_done,
      row.jobs_running, row.spent);
    out += buf;
  }
  return out;
}

ExperimentResult run_sim_experiment(
  const plan::PlanFile & plan, const std::vector<rungen::JobSpec> & jobs, const Testbed & testbed,
  const ExperimentOptions & options)
{
  const auto & config = options.config;
  broker::validate(config);
  ExperimentResult result;
  for (const auto & r : testbed.resources) {
    AgentState agent;
    agent.resource = r.desc.name;
    deploy_agent(agent, plan, Mode::sim);
    result.agents.push_back(std::move(agent));
  }

  GridSimulator sim(testbed.resources, options.seed);
  auto & state = result.state;
  state = broker::ScheduleState::create(jobnames(jobs), testbed.descriptors());

  // Periodic ticks allocate; one extra probe just past the deadline makes a
  // late run end exactly there.
  double next_tick = 0.0;
  sim.schedule_tick(next_tick);
  sim.schedule_tick(std::nextafter(config.deadline, inf));

  while (!broker::is_terminal(state.status)) {
    auto ev = sim.next(options.horizon);
    if (!ev) {
      break;
    }
    state.clock = ev->time;
    switch (ev->kind) {
      case SimEvent::Kind::tick:
        if (ev->time == next_tick) {
          if (broker::is_terminal(broker::check_constraints(state, config))) {
            break;
          }
          emit_trace(state, result.trace);
          const auto assignments = broker::allocate(state, config);
          broker::apply(state, assignments);
          for (const auto & a : assignments) {
            const auto & spec = jobs[a.job];
            const auto outputs = expected_outputs(plan, job_bindings(spec, "", "sim"));
            sim.dispatch(a.job, spec.jobname, state.resources[a.resource].desc.endpoint, a.lease, outputs);
          }
          next_tick += config.tick_interval;
          sim.schedule_tick(next_tick);
        }
        break;
      case SimEvent::Kind::finished:
        broker::account(state, completion(ev->job, ev->resource, ev->record, ev->time), config);
        result.records.push_back(std::move(ev->record));
        break;
      case SimEvent::Kind::lease_expired: {
        const double grant = broker::extend_lease(state, ev->job, config);
        if (grant > 0) {
          sim.extend(ev->job, grant);
        } else {
          auto rec = sim.terminate(ev->job);
          auto c = completion(ev->job, ev->resource, rec, ev->time);
          c.lease_exhausted = true;
          broker::account(state, c, config);
          result.records.push_back(std::move(rec));
        }
        break;
      }
    }
    broker::check_constraints(state, config);
    notify(options, state);
  }

  result.truncated = sim.truncated();
  if (!broker::is_terminal(state.status)) {
    // Horizon reached with work outstanding.
    state.status = broker::Status::deadline_missed;
    state.finish_time = state.clock;
  }
  for (std::size_t j = 0; j < state.jobs.size(); ++j) {
    if (state.jobs[j].status == broker::JobStatus::running) {
      auto rec = sim.terminate(j);
      broker::abandon(state, j, rec.cpu_seconds);
      result.records.push_back(std::move(rec));
    }
  }
  notify(options, state);
  emit_trace(state, result.trace);
  result.report = broker::make_report(state);
  result.event_log = sim.event_log();
  return result;
}

ExperimentResult run_local_experiment(
  const plan::PlanFile & plan, const std::vector<rungen::JobSpec> & jobs, const Testbed & testbed,
  const ExperimentOptions & options, const LocalOptions & local)
{
  const auto & config = options.config;
  broker::validate(config);
  ExperimentResult result;
  LocalContext context = local.context;
  context.epoch = std::chrono::steady_clock::now();
  const auto clock = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - context.epoch).count(); };

  std::vector<broker::ResourceDesc> usable;
  for (const auto & r : testbed.resources) {
    AgentState agent;
    agent.resource = r.desc.name;
    deploy_agent(agent, plan, Mode::local, &context);
    if (agent.usable) {
      auto desc = r.desc;
      desc.endpoint = result.agents.size();
      usable.push_back(desc);
    } else {
      result.warnings.push_back("resource " + r.desc.name + " unusable: " + agent.error);
    }
    result.agents.push_back(std::move(agent));
  }

  auto & state = result.state;
  state = broker::ScheduleState::create(jobnames(jobs), usable);

  struct Worker
  {
    std::thread thread;
    std::shared_ptr<JobControl> control;
    bool lease_stop = false;
  };
  std::map<std::size_t, Worker> workers;
  std::vector<int> attempts(jobs.size(), 0);
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<std::pair<std::size_t, ExecutionRecord>> finished;

  // Never charge past the lease: the budget invariant rests on it.
  const auto charged = [&](std::size_t job, double cpu) { return std::min(cpu, state.jobs[job].lease); };

  const auto collect = [&](bool wait) {
    std::unique_lock lock(mutex);
    if (wait && finished.empty()) {
      cv.wait_for(lock, std::chrono::duration<double>(local.poll_interval));
    }
    auto done = std::move(finished);
    finished.clear();
    lock.unlock();
    for (auto & [job, rec] : done) {
      auto it = workers.find(job);
      it->second.thread.join();
      state.clock = std::max(state.clock, clock());
      const auto resource = *state.jobs[job].resource;
      auto c = completion(job, resource, rec, state.clock);
      c.cpu_seconds = charged(job, rec.cpu_seconds);
      c.lease_exhausted = it->second.lease_stop;
      if (c.lease_exhausted) {
        c.ok = false;
      }
      workers.erase(it);
      broker::account(state, c, config);
      result.records.push_back(std::move(rec));
    }
  };

  double next_tick = 0.0;
  while (!broker::is_terminal(state.status)) {
    collect(true);
    state.clock = std::max(state.clock, clock());

    for (auto & [job, worker] : workers) {
      if (!worker.lease_stop && worker.control->cpu_used.load() >= state.jobs[job].lease) {
        if (!(broker::extend_lease(state, job, config) > 0)) {
          worker.lease_stop = true;
          worker.control->kill = true;
        }
      }
    }

    if (state.clock >= next_tick) {
      if (broker::is_terminal(broker::check_constraints(state, config))) {
        break;
      }
      emit_trace(state, result.trace);
      const auto assignments = broker::allocate(state, config);
      broker::apply(state, assignments);
      for (const auto & a : assignments) {
        auto control = std::make_shared<JobControl>();
        const AgentState * agent = &result.agents[state.resources[a.resource].desc.endpoint];
        const int attempt = ++attempts[a.job];
        const auto job = a.job;
        Worker w;
        w.control = control;
        w.thread = std::thread([&, control, job, attempt, agent] {
          auto rec = run_job_local(*agent, jobs[job], plan, context, *control, attempt);
          std::lock_guard lock(mutex);
          finished.emplace_back(job, std::move(rec));
          cv.notify_one();
        });
        workers.emplace(job, std::move(w));
      }
      next_tick = std::max(next_tick + config.tick_interval, state.clock);
    }
    broker::check_constraints(state, config);
    notify(options, state);
  }

  for (auto & [job, worker] : workers) {
    worker.control->kill = true;
  }
  while (!workers.empty()) {
    std::unique_lock lock(mutex);
    cv.wait_for(lock, std::chrono::duration<double>(local.poll_interval));
    auto done = std::move(finished);
    finished.clear();
    lock.unlock();
    for (auto & [job, rec] : done) {
      auto it = workers.find(job);
      it->second.thread.join();
      workers.erase(it);
      broker::abandon(state, job, charged(job, rec.cpu_seconds));
      result.records.push_back(std::move(rec));
    }
  }
  notify(options, state);
  emit_trace(state, result.trace);
  result.report = broker::make_report(state);
  return result;
}

}  // namespace vlab::fabric
