#include "vlab/broker.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace vlab::broker
{

namespace
{

constexpr double inf = std::numeric_limits<double>::infinity();
// Relative headroom kept below the budget so accumulated rounding in the
// ledger can never carry spending past it.
constexpr double budget_guard = 1e-9;

double usable_budget(const ExperimentConfig & config) { return config.budget * (1.0 - budget_guard); }

std::string fixed(double value, int decimals)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

std::string shortest(double value)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", value);
  return buf;
}

}  // namespace

std::string_view to_string(Strategy strategy)
{
  return strategy == Strategy::time_opt ? "time" : "cost";
}

Strategy parse_strategy(std::string_view text)
{
  if (text == "time") {
    return Strategy::time_opt;
  }
  if (text == "cost") {
    return Strategy::cost_opt;
  }
  throw std::invalid_argument("strategy must be 'time' or 'cost', got '" + std::string(text) + "'");
}

std::string_view to_string(Status status)
{
  switch (status) {
    case Status::running:
      return "running";
    case Status::completed:
      return "completed";
    case Status::deadline_missed:
      return "deadline-missed";
    case Status::budget_exhausted:
      return "budget-exhausted";
  }
  return "unknown";
}

void validate(const ExperimentConfig & config)
{
  if (!(config.deadline > 0)) {
    throw BrokerError("deadline must be positive");
  }
  if (!(config.budget > 0)) {
    throw BrokerError("budget must be positive");
  }
  if (!(config.tick_interval > 0) || !(config.default_job_time > 0) || !(config.rate_window > 0)) {
    throw BrokerError("tick interval, default job time and rate window must be positive");
  }
  if (config.safety_margin < 0 || config.safety_margin >= 1) {
    throw BrokerError("safety margin must lie in [0, 1)");
  }
  if (config.max_retries < 0) {
    throw BrokerError("retry limit cannot be negative");
  }
}

void validate(const ResourceDesc & resource)
{
  if (resource.cpus < 1) {
    throw BrokerError("resource " + resource.name + " needs at least one CPU");
  }
  if (!(resource.price >= 0) || std::isinf(resource.price)) {
    throw BrokerError("resource " + resource.name + " has a negative or invalid price");
  }
}

RateEstimate estimate_rate(
  const ResourceHistory & history, std::string_view resource, double window, double clock, double default_job_time)
{
  RateEstimate est;
  est.resource = std::string(resource);
  if (history.completions.empty()) {
    est.prior = true;
    est.jobs_per_second = history.cpus / default_job_time;
    return est;
  }
  double used = window;
  if (history.first_dispatch) {
    used = std::min(used, clock - *history.first_dispatch);
  }
  if (!(used > 0)) {
    used = window;
  }
  const auto & c = history.completions;
  auto first = std::upper_bound(c.begin(), c.end(), clock - used);
  auto last = std::upper_bound(c.begin(), c.end(), clock);
  est.window = used;
  est.completed_in_window = static_cast<std::size_t>(std::distance(first, last));
  est.jobs_per_second = static_cast<double>(est.completed_in_window) / used;
  est.stalled = est.completed_in_window == 0;
  return est;
}

ScheduleState ScheduleState::create(const std::vector<std::string> & jobnames, const std::vector<ResourceDesc> & resources)
{
  ScheduleState state;
  state.jobs.reserve(jobnames.size());
  for (std::size_t i = 0; i < jobnames.size(); ++i) {
    JobEntry job;
    job.name = jobnames[i];
    state.jobs.push_back(std::move(job));
    state.pending.push_back(i);
  }
  for (const auto & r : resources) {
    validate(r);
    ResourceLedger ledger;
    ledger.desc = r;
    ledger.history.cpus = r.cpus;
    state.resources.push_back(std::move(ledger));
  }
  return state;
}

ResourceOutlook outlook(const ScheduleState & state, std::size_t resource, const ExperimentConfig & config)
{
  const auto & ledger = state.resources.at(resource);
  const auto est =
    estimate_rate(ledger.history, ledger.desc.name, config.rate_window, state.clock, config.default_job_time);
  ResourceOutlook out;
  out.prior = est.prior;
  out.stalled = est.stalled;
  if (est.stalled) {
    // With nothing running, an empty window means idleness rather than a stall.
    if (ledger.running == 0) {
      out.rate = ledger.last_rate > 0 ? ledger.last_rate : ledger.desc.cpus / config.default_job_time;
      out.stalled = false;
    } else {
      out.rate = 0.0;
    }
  } else {
    out.rate = est.jobs_per_second;
  }
  out.expected_job_time = out.rate > 0 ? ledger.desc.cpus / out.rate : inf;
  out.projected_cost = ledger.desc.price == 0 ? 0.0 : ledger.desc.price * out.expected_job_time;
  return out;
}

bool affordable(const ScheduleState & state, double cost, const ExperimentConfig & config)
{
  return std::isfinite(cost) && state.committed() + cost <= usable_budget(config);
}

namespace
{

// Greedy fill of one resource's free slots from the pending queue.
void fill_resource(
  const ScheduleState & state, std::size_t r, const ResourceOutlook & view, double & committed, std::size_t & next,
  const ExperimentConfig & config, std::vector<Assignment> & out)
{
  const auto & ledger = state.resources[r];
  const double lease = ledger.desc.price == 0 ? inf : view.expected_job_time;
  for (int slot = 0; slot < ledger.free_slots() && next < state.pending.size(); ++slot) {
    if (!std::isfinite(view.projected_cost) || committed + view.projected_cost > usable_budget(config)) {
      return;
    }
    committed += view.projected_cost;
    out.push_back(Assignment{state.pending[next++], r, view.projected_cost, lease});
  }
}

}  // namespace

std::vector<Assignment> allocate_time_opt(const ScheduleState & state, const ExperimentConfig & config)
{
  std::vector<Assignment> out;
  if (state.status != Status::running || state.pending.empty()) {
    return out;
  }
  std::vector<ResourceOutlook> views;
  std::vector<std::size_t> order;
  for (std::size_t r = 0; r < state.resources.size(); ++r) {
    views.push_back(outlook(state, r, config));
    order.push_back(r);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ra = views[a].rate / state.resources[a].desc.cpus;
    const double rb = views[b].rate / state.resources[b].desc.cpus;
    if (ra != rb) {
      return ra > rb;
    }
    if (views[a].projected_cost != views[b].projected_cost) {
      return views[a].projected_cost < views[b].projected_cost;
    }
    return state.resources[a].desc.name < state.resources[b].desc.name;
  });

  double committed = state.committed();
  std::size_t next = 0;
  for (auto r : order) {
    fill_resource(state, r, views[r], committed, next, config, out);
  }
  return out;
}

std::vector<Assignment> allocate_cost_opt(const ScheduleState & state, const ExperimentConfig & config)
{
  std::vector<Assignment> out;
  if (state.status != Status::running || state.pending.empty()) {
    return out;
  }
  std::vector<std::size_t> order(state.resources.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto & da = state.resources[a].desc;
    const auto & db = state.resources[b].desc;
    return da.price != db.price ? da.price < db.price : da.name < db.name;
  });

  const bool warmup = state.clock < config.warmup();
  const double limit = config.deadline - config.safety_margin * std::max(0.0, config.deadline - state.clock);
  double committed = state.committed();
  double engaged_rate = 0.0;
  std::size_t next = 0;

  std::size_t i = 0;
  bool first_tier = true;
  while (i < order.size() && next < state.pending.size()) {
    if (!first_tier && !warmup) {
      const double pending_after = static_cast<double>(state.pending.size() - next);
      const double projected = engaged_rate > 0 ? state.clock + pending_after / engaged_rate : inf;
      if (projected <= limit) {
        break;
      }
    }
    first_tier = false;
    const double tier_price = state.resources[order[i]].desc.price;
    std::size_t tier_end = i;
    while (tier_end < order.size() && state.resources[order[tier_end]].desc.price == tier_price) {
      ++tier_end;
    }
    std::vector<ResourceOutlook> views;
    for (std::size_t k = i; k < tier_end; ++k) {
      views.push_back(outlook(state, order[k], config));
      fill_resource(state, order[k], views.back(), committed, next, config, out);
    }
    // Only resources that can still take work at this price count toward
    // the projected finish.
    for (const auto & view : views) {
      if (std::isfinite(view.projected_cost) && committed + view.projected_cost <= usable_budget(config)) {
        engaged_rate += view.rate;
      }
    }
    i = tier_end;
  }
  return out;
}

std::vector<Assignment> allocate(const ScheduleState & state, const ExperimentConfig & config)
{
  return config.strategy == Strategy::time_opt ? allocate_time_opt(state, config) : allocate_cost_opt(state, config);
}

void apply(ScheduleState & state, const std::vector<Assignment> & assignments)
{
  if (assignments.empty()) {
    return;
  }
  std::unordered_set<std::size_t> taken;
  for (const auto & a : assignments) {
    auto & job = state.jobs.at(a.job);
    auto & ledger = state.resources.at(a.resource);
    if (job.status != JobStatus::pending || !taken.insert(a.job).second) {
      throw BrokerError("job " + job.name + " is not pending");
    }
    if (ledger.free_slots() <= 0) {
      throw BrokerError("resource " + ledger.desc.name + " has no free slot");
    }
    job.status = JobStatus::running;
    job.resource = a.resource;
    job.lease = a.lease;
    job.reserved = a.projected_cost;
    job.dispatched_at = state.clock;
    state.reserved += a.projected_cost;
    ++state.running;
    ++ledger.running;
    ++ledger.assigned;
    if (!ledger.history.first_dispatch) {
      ledger.history.first_dispatch = state.clock;
    }
  }
  std::deque<std::size_t> remaining;
  for (auto j : state.pending) {
    if (!taken.count(j)) {
      remaining.push_back(j);
    }
  }
  state.pending.swap(remaining);
}

void account(ScheduleState & state, const Completion & c, const ExperimentConfig & config)
{
  auto & job = state.jobs.at(c.job);
  if (job.status != JobStatus::running || job.resource != c.resource) {
    throw BrokerError("completion for job " + job.name + " which is not running on that resource");
  }
  auto & ledger = state.resources.at(c.resource);
  state.clock = std::max(state.clock, c.time);

  const double cost = c.cpu_seconds * ledger.desc.price;
  state.spent += cost;
  ledger.spent += cost;
  state.reserved -= job.reserved;
  job.reserved = 0.0;
  job.resource.reset();
  --state.running;
  --ledger.running;
  if (state.running == 0) {
    state.reserved = 0.0;
  }

  if (c.ok) {
    job.status = JobStatus::done;
    ++state.done;
    ++ledger.done;
    ledger.history.completions.push_back(state.clock);
    const auto est =
      estimate_rate(ledger.history, ledger.desc.name, config.rate_window, state.clock, config.default_job_time);
    if (!est.prior && est.jobs_per_second > 0) {
      ledger.last_rate = est.jobs_per_second;
    }
    return;
  }

  --ledger.assigned;
  ++ledger.failures;
  if (!c.lease_exhausted && ++job.failures > config.max_retries) {
    job.status = JobStatus::failed;
    ++state.failed;
    return;
  }
  job.status = JobStatus::pending;
  state.pending.push_back(c.job);
}

void abandon(ScheduleState & state, std::size_t job_index, double cpu_seconds)
{
  auto & job = state.jobs.at(job_index);
  if (job.status != JobStatus::running || !job.resource) {
    throw BrokerError("job " + job.name + " is not running");
  }
  auto & ledger = state.resources[*job.resource];
  const double cost = cpu_seconds * ledger.desc.price;
  state.spent += cost;
  ledger.spent += cost;
  state.reserved -= job.reserved;
  job.reserved = 0.0;
  job.resource.reset();
  job.status = JobStatus::pending;
  --state.running;
  --ledger.running;
  --ledger.assigned;
  if (state.running == 0) {
    state.reserved = 0.0;
  }
  state.pending.push_back(job_index);
}

double extend_lease(ScheduleState & state, std::size_t job_index, const ExperimentConfig & config)
{
  auto & job = state.jobs.at(job_index);
  if (job.status != JobStatus::running || !job.resource) {
    throw BrokerError("lease extension for job " + job.name + " which is not running");
  }
  const double price = state.resources[*job.resource].desc.price;
  if (price == 0) {
    return inf;
  }
  const auto view = outlook(state, *job.resource, config);
  double wanted = view.expected_job_time;
  if (!std::isfinite(wanted) || wanted <= 0) {
    wanted = std::max(job.lease, config.default_job_time);
  }
  const double room = (usable_budget(config) - state.committed()) / price;
  const double grant = std::min(wanted, room);
  if (!(grant > 1e-6)) {
    return 0.0;
  }
  job.lease += grant;
  job.reserved += price * grant;
  state.reserved += price * grant;
  return grant;
}

Status check_constraints(ScheduleState & state, const ExperimentConfig & config)
{
  if (is_terminal(state.status)) {
    return state.status;
  }
  if (state.pending.empty() && state.running == 0) {
    state.status = Status::completed;
  } else if (state.clock > config.deadline) {
    state.status = Status::deadline_missed;
  } else if (!state.pending.empty() && state.running == 0) {
    bool any = false;
    for (std::size_t r = 0; r < state.resources.size() && !any; ++r) {
      any = affordable(state, outlook(state, r, config).projected_cost, config);
    }
    if (!any) {
      state.status = Status::budget_exhausted;
    }
  }
  if (is_terminal(state.status)) {
    state.finish_time = state.clock;
  }
  return state.status;
}

Report make_report(const ScheduleState & state)
{
  if (!is_terminal(state.status)) {
    throw BrokerError("report requested before the experiment reached a terminal state");
  }
  Report report;
  for (const auto & ledger : state.resources) {
    report.resources.push_back(ResourceReport{ledger.desc.name, ledger.desc.price, ledger.done, ledger.spent});
  }
  report.completed = state.done;
  report.failed = state.failed;
  report.total_cost = state.spent;
  report.finish_seconds = state.finish_time;
  report.status = state.status;
  return report;
}

std::string format_report_text(const Report & report)
{
  std::size_t width = 8;
  for (const auto & r : report.resources) {
    width = std::max(width, r.name.size());
  }
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s %8s %14s %10s\n", static_cast<int>(width), "resource", "price", "jobs_executed",
    "spent_gd");
  out << line;
  for (const auto & r : report.resources) {
    std::snprintf(line, sizeof(line), "%-*s %8s %14d %10s\n", static_cast<int>(width), r.name.c_str(),
      shortest(r.price).c_str(), r.jobs, fixed(r.spent, 0).c_str());
    out << line;
  }
  out << "jobs_completed=" << report.completed << '\n';
  out << "jobs_failed=" << report.failed << '\n';
  out << "total_cost_gd=" << fixed(report.total_cost, 0) << '\n';
  out << "time_to_finish_min=" << fixed(report.finish_seconds / 60.0, 2) << '\n';
  out << "status=" << to_string(report.status) << '\n';
  return out.str();
}

std::string format_report_csv(const Report & report)
{
  std::ostringstream out;
  out << "resource,price,jobs_executed,spent_gd\n";
  int total_jobs = 0;
  for (const auto & r : report.resources) {
    out << r.name << ',' << shortest(r.price) << ',' << r.jobs << ',' << fixed(r.spent, 0) << '\n';
    total_jobs += r.jobs;
  }
  out << "total,," << total_jobs << ',' << fixed(report.total_cost, 0) << '\n';
  return out.str();
}

}  // namespace vlab::broker
