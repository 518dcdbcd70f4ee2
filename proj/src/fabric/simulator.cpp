#include "vlab/fabric/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace vlab::fabric
{

namespace
{

constexpr double inf = std::numeric_limits<double>::infinity();
constexpr double eps = 1e-9;

std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

GridSimulator::GridSimulator(std::vector<SimResource> resources, std::uint64_t experiment_seed)
: resources_(std::move(resources)), slots_(resources_.size())
{
  for (std::size_t r = 0; r < resources_.size(); ++r) {
    broker::validate(resources_[r].desc);
    rngs_.emplace_back(splitmix64(resources_[r].seed ^ splitmix64(experiment_seed)));
    slots_[r].available = resources_[r].available_at(0.0);
    if (double t = resources_[r].next_change(0.0); std::isfinite(t)) {
      push(t, Pending::Kind::availability, r, 0);
    }
  }
}

void GridSimulator::push(double time, Pending::Kind kind, std::size_t target, std::uint64_t generation)
{
  queue_.push(Pending{time, seq_++, kind, target, generation});
}

void GridSimulator::log(const char * what, const Job * job, std::size_t resource, double extra)
{
  char buf[320];
  int n = std::snprintf(buf, sizeof(buf), "%.6f %s %s %s", now_, what, resources_[resource].desc.name.c_str(),
    job ? job->name.c_str() : "-");
  if (extra >= 0 && n > 0 && static_cast<std::size_t>(n) < sizeof(buf)) {
    std::snprintf(buf + n, sizeof(buf) - n, " %.6f", extra);
  }
  log_ += buf;
  log_ += '\n';
}

void GridSimulator::dispatch(
  std::size_t job, const std::string & jobname, std::size_t resource, double lease, std::vector<std::string> outputs)
{
  if (resource >= resources_.size()) {
    throw SimError("dispatch to unknown resource");
  }
  if (jobs_.count(job)) {
    throw SimError("job " + jobname + " is already dispatched");
  }
  if (!(lease > 0)) {
    throw SimError("job " + jobname + " dispatched with an empty lease");
  }
  const auto & res = resources_[resource];
  auto & rng = rngs_[resource];
  Job j;
  j.name = jobname;
  j.resource = resource;
  j.fetch_left = res.fetch_latency;
  j.cpu_left = res.model.sample(rng);
  j.will_fail = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < res.failure_probability;
  j.lease = lease;
  j.outputs = std::move(outputs);
  auto & stored = jobs_.emplace(job, std::move(j)).first->second;
  log("dispatch", &stored, resource, stored.cpu_left);
  slots_[resource].waiting.push_back(job);
  start_waiting(resource);
}

void GridSimulator::start_waiting(std::size_t resource)
{
  auto & slot = slots_[resource];
  while (slot.available && slot.running < resources_[resource].desc.cpus && !slot.waiting.empty()) {
    const auto id = slot.waiting.front();
    slot.waiting.erase(slot.waiting.begin());
    auto & job = jobs_.at(id);
    job.phase = Phase::running;
    job.start = now_;
    ++slot.running;
    log("start", &job, resource);
    resume(id);
  }
}

void GridSimulator::resume(std::size_t id)
{
  auto & job = jobs_.at(id);
  job.resumed_at = now_;
  ++job.generation;
  schedule_job(id);
}

void GridSimulator::schedule_job(std::size_t id)
{
  const auto & job = jobs_.at(id);
  const double to_finish = job.fetch_left + job.cpu_left;
  const double room = job.lease - job.cpu_used;
  const double to_lease = room < job.cpu_left ? job.fetch_left + std::max(0.0, room) : inf;
  push(now_ + std::min(to_finish, to_lease), Pending::Kind::job, id, job.generation);
}

void GridSimulator::advance(Job & job)
{
  if (job.phase != Phase::running) {
    return;
  }
  double elapsed = now_ - job.resumed_at;
  const double fetch = std::min(elapsed, job.fetch_left);
  job.fetch_left -= fetch;
  elapsed -= fetch;
  const double cpu = std::min(elapsed, job.cpu_left);
  job.cpu_left -= cpu;
  job.cpu_used += cpu;
  job.resumed_at = now_;
}

void GridSimulator::release(std::size_t resource)
{
  --slots_[resource].running;
  start_waiting(resource);
}

void GridSimulator::extend(std::size_t id, double extra)
{
  auto it = jobs_.find(id);
  if (it == jobs_.end()) {
    throw SimError("lease extension for a job that is not dispatched");
  }
  auto & job = it->second;
  job.lease += extra;
  log("extend", &job, job.resource, extra);
  if (job.phase == Phase::held) {
    job.phase = Phase::running;
    resume(id);
  } else if (job.phase == Phase::running) {
    advance(job);
    resume(id);
  }
}

ExecutionRecord GridSimulator::terminate(std::size_t id)
{
  auto it = jobs_.find(id);
  if (it == jobs_.end()) {
    throw SimError("termination of a job that is not dispatched");
  }
  auto & job = it->second;
  advance(job);
  ExecutionRecord rec;
  rec.job = job.name;
  rec.resource = resources_[job.resource].desc.name;
  rec.start = job.start < 0 ? now_ : job.start;
  rec.end = now_;
  rec.cpu_seconds = job.cpu_used;
  rec.outcome = ExecutionRecord::Outcome::failed;
  log("kill", &job, job.resource, job.cpu_used);
  const auto resource = job.resource;
  const bool holds_slot = job.phase != Phase::waiting;
  if (!holds_slot) {
    auto & w = slots_[resource].waiting;
    w.erase(std::remove(w.begin(), w.end(), id), w.end());
  }
  jobs_.erase(it);
  if (holds_slot) {
    release(resource);
  }
  return rec;
}

void GridSimulator::schedule_tick(double at)
{
  push(at, Pending::Kind::tick, 0, 0);
}

int GridSimulator::running_on(std::size_t resource) const
{
  int n = 0;
  for (const auto & [id, job] : jobs_) {
    n += job.resource == resource && (job.phase == Phase::running || job.phase == Phase::held);
  }
  return n;
}

int GridSimulator::waiting_on(std::size_t resource) const
{
  return static_cast<int>(slots_.at(resource).waiting.size());
}

std::optional<SimEvent> GridSimulator::next(double horizon)
{
  while (!queue_.empty()) {
    const auto top = queue_.top();
    if (top.kind == Pending::Kind::job) {
      auto it = jobs_.find(top.target);
      if (it == jobs_.end() || it->second.generation != top.generation || it->second.phase != Phase::running) {
        queue_.pop();
        continue;
      }
    }
    if (top.time > horizon) {
      truncated_ = true;
      log("truncated", nullptr, 0);
      return std::nullopt;
    }
    queue_.pop();
    now_ = std::max(now_, top.time);

    switch (top.kind) {
      case Pending::Kind::tick: {
        SimEvent ev;
        ev.kind = SimEvent::Kind::tick;
        ev.time = now_;
        return ev;
      }
      case Pending::Kind::availability: {
        const auto r = top.target;
        auto & slot = slots_[r];
        const bool up = resources_[r].available_at(now_);
        if (up != slot.available) {
          slot.available = up;
          log(up ? "up" : "down", nullptr, r);
          for (auto & [id, job] : jobs_) {
            if (job.resource != r) {
              continue;
            }
            if (!up && job.phase == Phase::running) {
              advance(job);
              job.phase = Phase::suspended;
              ++job.generation;
            } else if (up && job.phase == Phase::suspended) {
              job.phase = Phase::running;
              resume(id);
            }
          }
          start_waiting(r);
        }
        if (double t = resources_[r].next_change(now_); std::isfinite(t)) {
          push(t, Pending::Kind::availability, r, 0);
        }
        continue;
      }
      case Pending::Kind::job:
        break;
    }

    const auto id = top.target;
    auto & job = jobs_.at(id);
    advance(job);
    SimEvent ev;
    ev.time = now_;
    ev.job = id;
    ev.resource = job.resource;
    if (job.cpu_left <= eps && job.fetch_left <= eps) {
      ev.kind = SimEvent::Kind::finished;
      auto & rec = ev.record;
      rec.job = job.name;
      rec.resource = resources_[job.resource].desc.name;
      rec.start = job.start;
      rec.end = now_;
      rec.cpu_seconds = job.cpu_used;
      rec.outcome = job.will_fail ? ExecutionRecord::Outcome::failed : ExecutionRecord::Outcome::ok;
      if (!job.will_fail) {
        rec.outputs = std::move(job.outputs);
      }
      log(job.will_fail ? "fail" : "finish", &job, job.resource, job.cpu_used);
      const auto resource = job.resource;
      jobs_.erase(id);
      release(resource);
      return ev;
    }
    job.phase = Phase::held;
    ++job.generation;
    ev.kind = SimEvent::Kind::lease_expired;
    log("lease", &job, job.resource, job.cpu_used);
    return ev;
  }
  return std::nullopt;
}

}  // namespace vlab::fabric
