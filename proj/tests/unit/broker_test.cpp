#include "vlab/broker.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>
#include <random>

using namespace vlab::broker;

namespace
{

std::vector<std::string> names(std::size_t n)
{
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back("j" + std::to_string(i + 1));
  }
  return out;
}

ResourceDesc res(std::string name, int cpus, double price)
{
  ResourceDesc d;
  d.name = std::move(name);
  d.cpus = cpus;
  d.price = price;
  return d;
}

ExperimentConfig config(double deadline = 3600, double budget = 50000, Strategy s = Strategy::time_opt)
{
  ExperimentConfig c;
  c.deadline = deadline;
  c.budget = budget;
  c.strategy = s;
  return c;
}

std::map<std::size_t, int> per_resource(const std::vector<Assignment> & as)
{
  std::map<std::size_t, int> out;
  for (const auto & a : as) {
    ++out[a.resource];
  }
  return out;
}

// Checks the partition and budget invariants of a ledger.
void check_invariants(const ScheduleState & s, const ExperimentConfig & c)
{
  std::size_t pending = 0;
  std::size_t running = 0;
  std::size_t done = 0;
  std::size_t failed = 0;
  for (const auto & j : s.jobs) {
    switch (j.status) {
      case JobStatus::pending:
        ++pending;
        break;
      case JobStatus::running:
        ++running;
        break;
      case JobStatus::done:
        ++done;
        break;
      case JobStatus::failed:
        ++failed;
        break;
    }
  }
  CHECK(pending == s.pending.size());
  CHECK(running == s.running);
  CHECK(done == s.done);
  CHECK(failed == s.failed);
  CHECK(pending + running + done + failed == s.jobs.size());
  CHECK(s.spent <= c.budget);
  CHECK(s.committed() <= c.budget * (1 + 1e-12));
  double ledger_spent = 0;
  int ledger_done = 0;
  for (const auto & r : s.resources) {
    CHECK(r.running >= 0);
    CHECK(r.running <= r.desc.cpus);
    ledger_spent += r.spent;
    ledger_done += r.done;
  }
  CHECK(ledger_spent == doctest::Approx(s.spent));
  CHECK(static_cast<std::size_t>(ledger_done) == s.done);
}

}  // namespace

TEST_SUITE("broker rates")
{
  TEST_CASE("twelve completions in 120 seconds")
  {
    ResourceHistory h;
    h.cpus = 4;
    h.first_dispatch = 0.0;
    for (int i = 0; i < 12; ++i) {
      h.completions.push_back(1000 + i * 10);
    }
    const auto est = estimate_rate(h, "r", 120, 1119, 60);
    CHECK(est.completed_in_window == 12);
    CHECK(est.window == 120);
    CHECK(est.jobs_per_second == doctest::Approx(0.1));
    CHECK_FALSE(est.prior);
    CHECK_FALSE(est.stalled);
  }

  TEST_CASE("prior and stall")
  {
    ResourceHistory h;
    h.cpus = 4;
    const auto prior = estimate_rate(h, "r", 600, 0, 60);
    CHECK(prior.prior);
    CHECK(prior.jobs_per_second == doctest::Approx(4.0 / 60.0));

    h.first_dispatch = 0;
    h.completions = {10, 20};
    const auto stalled = estimate_rate(h, "r", 100, 500, 60);
    CHECK(stalled.stalled);
    CHECK(stalled.jobs_per_second == 0);
  }

  TEST_CASE("window clipped to time since first dispatch")
  {
    ResourceHistory h;
    h.cpus = 1;
    h.first_dispatch = 100;
    h.completions = {130, 160};
    const auto est = estimate_rate(h, "r", 600, 200, 60);
    CHECK(est.window == 100);
    CHECK(est.jobs_per_second == doctest::Approx(0.02));
  }
}

TEST_SUITE("broker accounting")
{
  TEST_CASE("ten CPU seconds at price two")
  {
    auto c = config();
    auto s = ScheduleState::create(names(2), {res("a", 1, 2.0), res("free", 1, 0.0)});
    apply(s, {Assignment{0, 0, 120, 60}, Assignment{1, 1, 0, INFINITY}});
    account(s, Completion{0, 0, 10.0, true, false, 5.0}, c);
    CHECK(s.spent == 20.0);
    CHECK(s.resources[0].spent == 20.0);
    account(s, Completion{1, 1, 500.0, true, false, 6.0}, c);
    CHECK(s.spent == 20.0);
    CHECK(s.done == 2);
    CHECK(check_constraints(s, c) == Status::completed);
    CHECK(s.finish_time == 6.0);
    check_invariants(s, c);
  }

  TEST_CASE("double completion is rejected")
  {
    auto c = config();
    auto s = ScheduleState::create(names(1), {res("a", 1, 1.0)});
    apply(s, {Assignment{0, 0, 60, 60}});
    account(s, Completion{0, 0, 5, true, false, 1}, c);
    CHECK_THROWS_AS(account(s, Completion{0, 0, 5, true, false, 2}, c), BrokerError);
    CHECK(s.spent == 5.0);
  }

  TEST_CASE("failures retry then fail permanently")
  {
    auto c = config();
    c.max_retries = 2;
    auto s = ScheduleState::create(names(1), {res("a", 1, 1.0)});
    for (int attempt = 0; attempt < 3; ++attempt) {
      REQUIRE(s.pending.size() == 1);
      apply(s, {Assignment{0, 0, 60, 60}});
      account(s, Completion{0, 0, 1, false, false, 1.0 + attempt}, c);
    }
    CHECK(s.pending.empty());
    CHECK(s.failed == 1);
    CHECK(s.jobs[0].status == JobStatus::failed);
    CHECK(check_constraints(s, c) == Status::completed);
    check_invariants(s, c);
  }

  TEST_CASE("lease exhaustion requeues without using a retry")
  {
    auto c = config();
    c.max_retries = 0;
    auto s = ScheduleState::create(names(1), {res("a", 1, 1.0)});
    apply(s, {Assignment{0, 0, 60, 60}});
    account(s, Completion{0, 0, 60, false, true, 60}, c);
    CHECK(s.jobs[0].status == JobStatus::pending);
    CHECK(s.jobs[0].failures == 0);
  }

  TEST_CASE("lease extension is bounded by the residual budget")
  {
    auto c = config(3600, 100);
    auto s = ScheduleState::create(names(1), {res("a", 1, 1.0)});
    apply(s, {Assignment{0, 0, 60, 60}});
    const double grant = extend_lease(s, 0, c);
    CHECK(grant == doctest::Approx(40.0));
    CHECK(s.committed() <= c.budget);
    CHECK(extend_lease(s, 0, c) == 0.0);
    account(s, Completion{0, 0, s.jobs[0].lease, false, true, 100}, c);
    CHECK(s.spent <= c.budget);
    CHECK(check_constraints(s, c) == Status::budget_exhausted);
  }

  TEST_CASE("abandon charges and requeues")
  {
    auto c = config();
    auto s = ScheduleState::create(names(1), {res("a", 1, 3.0)});
    apply(s, {Assignment{0, 0, 180, 60}});
    abandon(s, 0, 10);
    CHECK(s.spent == 30.0);
    CHECK(s.pending.size() == 1);
    CHECK(s.jobs[0].failures == 0);
    CHECK(s.reserved == 0.0);
    check_invariants(s, c);
  }
}

TEST_SUITE("broker constraints")
{
  TEST_CASE("spec examples")
  {
    auto c = config(3600, 50000);
    auto done = ScheduleState::create({}, {res("a", 1, 1.0)});
    done.clock = 2040;
    CHECK(check_constraints(done, c) == Status::completed);

    auto late = ScheduleState::create(names(5), {res("a", 1, 1.0)});
    late.clock = 3601;
    CHECK(check_constraints(late, c) == Status::deadline_missed);
    CHECK(late.finish_time == 3601);

    // Cheapest projected job costs 50 G$ against 10 G$ left.
    auto broke = ScheduleState::create(names(3), {res("a", 1, 1.0), res("b", 1, 2.0)});
    broke.spent = 49990;
    c.default_job_time = 50;
    CHECK(check_constraints(broke, c) == Status::budget_exhausted);
  }

  TEST_CASE("terminal states never revert")
  {
    auto c = config(100, 1000);
    auto s = ScheduleState::create(names(2), {res("a", 1, 1.0)});
    s.clock = 101;
    CHECK(check_constraints(s, c) == Status::deadline_missed);
    s.pending.clear();
    s.clock = 50;
    CHECK(check_constraints(s, c) == Status::deadline_missed);
    CHECK(s.finish_time == 101);
  }

  TEST_CASE("deadline does not bite at exactly the deadline")
  {
    auto c = config(100, 1000);
    auto s = ScheduleState::create(names(2), {res("a", 1, 1.0)});
    s.clock = 100;
    CHECK(check_constraints(s, c) == Status::running);
  }

  TEST_CASE("zero-job report")
  {
    auto c = config();
    auto s = ScheduleState::create({}, {res("a", 2, 1.0), res("b", 1, 3.0)});
    REQUIRE(check_constraints(s, c) == Status::completed);
    const auto r = make_report(s);
    CHECK(r.completed == 0);
    CHECK(r.total_cost == 0);
    for (const auto & rr : r.resources) {
      CHECK(rr.jobs == 0);
    }
    const auto text = format_report_text(r);
    CHECK(text.find("status=completed\n") != std::string::npos);
    CHECK(text.find("total_cost_gd=0\n") != std::string::npos);
    CHECK(format_report_csv(r) == "resource,price,jobs_executed,spent_gd\na,1,0,0\nb,3,0,0\ntotal,,0,0\n");
  }

  TEST_CASE("report before terminal is rejected")
  {
    auto s = ScheduleState::create(names(1), {res("a", 1, 1.0)});
    CHECK_THROWS_AS(make_report(s), BrokerError);
  }

  TEST_CASE("config validation")
  {
    CHECK_THROWS_AS(validate(config(0, 1)), BrokerError);
    CHECK_THROWS_AS(validate(config(1, -1)), BrokerError);
    CHECK_NOTHROW(validate(config(1, 1)));
    CHECK_THROWS_AS(ScheduleState::create({}, {res("a", 0, 1.0)}), BrokerError);
    CHECK_THROWS_AS(ScheduleState::create({}, {res("a", 1, -1.0)}), BrokerError);
    CHECK(parse_strategy("cost") == Strategy::cost_opt);
    CHECK_THROWS(parse_strategy("fast"));
  }
}

TEST_SUITE("broker allocation")
{
  TEST_CASE("two identical resources split ten jobs evenly")
  {
    auto c = config();
    auto s = ScheduleState::create(names(10), {res("a", 5, 1.0), res("b", 5, 1.0)});
    const auto as = allocate_time_opt(s, c);
    auto counts = per_resource(as);
    CHECK(as.size() == 10);
    CHECK(counts[0] == 5);
    CHECK(counts[1] == 5);

    // Steady state: one CPU each, completions alternate.
    auto s2 = ScheduleState::create(names(10), {res("a", 1, 1.0), res("b", 1, 1.0)});
    std::map<std::size_t, int> total;
    for (int step = 0; step < 10; ++step) {
      const auto batch = allocate_time_opt(s2, c);
      apply(s2, batch);
      s2.clock += 60;
      for (const auto & a : batch) {
        ++total[a.resource];
        account(s2, Completion{a.job, a.resource, 60, true, false, s2.clock}, c);
      }
    }
    CHECK(total[0] == 5);
    CHECK(total[1] == 5);
    check_invariants(s2, c);
  }

  TEST_CASE("never more assignments than pending jobs or free slots")
  {
    auto c = config();
    auto s = ScheduleState::create(names(3), {res("a", 8, 1.0), res("b", 4, 2.0)});
    CHECK(allocate_time_opt(s, c).size() == 3);
    auto big = ScheduleState::create(names(30), {res("a", 8, 1.0), res("b", 4, 2.0)});
    CHECK(allocate_time_opt(big, c).size() == 12);
    CHECK(allocate_cost_opt(big, c).size() == 12);
  }

  TEST_CASE("faster resources fill first")
  {
    auto c = config();
    auto s = ScheduleState::create(names(3), {res("slow", 2, 1.0), res("fast", 2, 1.0)});
    s.clock = 600;
    s.resources[0].history.first_dispatch = 0;
    s.resources[1].history.first_dispatch = 0;
    s.resources[0].history.completions = {300, 590};
    s.resources[1].history.completions = {100, 200, 300, 400, 500, 590};
    const auto as = allocate_time_opt(s, c);
    auto counts = per_resource(as);
    CHECK(counts[1] == 2);
    CHECK(counts[0] == 1);
  }

  TEST_CASE("cheaper resource wins a tie on rate when budget is short")
  {
    // Both at the prior rate; budget covers one 60 s job at price 1 only.
    auto c = config(3600, 100);
    auto s = ScheduleState::create(names(2), {res("dear", 1, 1.5), res("cheap", 1, 1.0)});
    const auto as = allocate_time_opt(s, c);
    REQUIRE(as.size() == 1);
    CHECK(as[0].resource == 1);
  }

  TEST_CASE("no feasible assignment is skipped")
  {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> price(0.5, 4.0);
    for (int trial = 0; trial < 300; ++trial) {
      auto c = config(3600, 100 + static_cast<double>(rng() % 900));
      std::vector<ResourceDesc> rs;
      for (int r = 0; r < 3; ++r) {
        rs.push_back(res("r" + std::to_string(r), 1 + static_cast<int>(rng() % 3), std::round(price(rng) * 4) / 4));
      }
      auto s = ScheduleState::create(names(6), rs);
      s.spent = static_cast<double>(rng() % 100);
      const auto as = allocate_time_opt(s, c);

      std::vector<double> cost;
      std::vector<int> free;
      for (std::size_t r = 0; r < 3; ++r) {
        cost.push_back(outlook(s, r, c).projected_cost);
        free.push_back(s.resources[r].free_slots());
      }
      auto counts = per_resource(as);
      double total = s.committed();
      int n = 0;
      for (std::size_t r = 0; r < 3; ++r) {
        CHECK(counts[r] <= free[r]);
        total += counts[r] * cost[r];
        n += counts[r];
      }
      CHECK(total <= c.budget);
      CHECK(n == static_cast<int>(as.size()));
      // Brute force: enumerate every count vector; none that extends the
      // chosen one by a single job may be feasible.
      for (int a = 0; a <= free[0]; ++a) {
        for (int b = 0; b <= free[1]; ++b) {
          for (int d = 0; d <= free[2]; ++d) {
            const int k[3] = {a, b, d};
            if (a + b + d > 6) {
              continue;
            }
            int extra = 0;
            bool superset = true;
            double t = s.committed();
            for (std::size_t r = 0; r < 3; ++r) {
              superset = superset && k[r] >= counts[r];
              extra += k[r] - counts[r];
              t += k[r] * cost[r];
            }
            if (superset && extra == 1) {
              CHECK_MESSAGE(t > c.budget * (1 - 1e-9), "skipped a feasible assignment in trial ", trial);
            }
          }
        }
      }
    }
  }

  TEST_CASE("scaling prices and budget together leaves allocation unchanged")
  {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
      const double k = std::ldexp(1.0, static_cast<int>(rng() % 6) - 2);
      auto c = config(3600, 200 + static_cast<double>(rng() % 2000));
      auto ck = c;
      ck.budget = c.budget * k;
      std::vector<ResourceDesc> rs;
      std::vector<ResourceDesc> rk;
      for (int r = 0; r < 4; ++r) {
        rs.push_back(res("r" + std::to_string(r), 1 + static_cast<int>(rng() % 4), 1 + static_cast<double>(rng() % 3)));
        rk.push_back(rs.back());
        rk.back().price *= k;
      }
      for (auto strategy : {Strategy::time_opt, Strategy::cost_opt}) {
        c.strategy = ck.strategy = strategy;
        auto s = ScheduleState::create(names(15), rs);
        auto sk = ScheduleState::create(names(15), rk);
        const auto a = allocate(s, c);
        const auto b = allocate(sk, ck);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
          CHECK(a[i].job == b[i].job);
          CHECK(a[i].resource == b[i].resource);
        }
      }
    }
  }
}

TEST_SUITE("broker cost-opt")
{
  // Cheap resource with 40 recent completions: 4 CPUs at 60 s per job.
  ScheduleState healthy(std::size_t pending)
  {
    auto s = ScheduleState::create(names(pending), {res("cheap", 4, 1.0), res("dear", 4, 3.0)});
    s.clock = 1000;
    auto & h = s.resources[0].history;
    h.first_dispatch = 0;
    for (int i = 0; i < 40; ++i) {
      h.completions.push_back(400 + i * 15);
    }
    return s;
  }

  TEST_CASE("cheap resource alone meets the deadline")
  {
    auto c = config(3600, 50000, Strategy::cost_opt);
    auto s = healthy(10);
    const auto as = allocate_cost_opt(s, c);
    auto counts = per_resource(as);
    CHECK(counts[0] == 4);
    CHECK(counts.count(1) == 0);
  }

  TEST_CASE("every tier is engaged during warmup")
  {
    auto c = config(3600, 50000, Strategy::cost_opt);
    auto s = healthy(10);
    s.clock = 100;
    s.resources[0].history.completions = {50, 60};
    const auto counts = per_resource(allocate_cost_opt(s, c));
    CHECK(counts.at(0) == 4);
    CHECK(counts.at(1) == 4);
  }

  TEST_CASE("too much work for the cheap tier engages the next")
  {
    auto c = config(3600, 50000, Strategy::cost_opt);
    auto s = healthy(400);
    const auto counts = per_resource(allocate_cost_opt(s, c));
    CHECK(counts.at(0) == 4);
    CHECK(counts.at(1) == 4);
  }

  TEST_CASE("stalled cheap resource re-engages the expensive tier")
  {
    auto c = config(3600, 50000, Strategy::cost_opt);
    auto s = healthy(10);
    // Four jobs stuck on the cheap resource and nothing finished for 700 s.
    s.clock = 1700;
    apply(s, {Assignment{0, 0, 60, 60}, Assignment{1, 0, 60, 60}, Assignment{2, 0, 60, 60}, Assignment{3, 0, 60, 60}});
    CHECK(outlook(s, 0, c).stalled);
    const auto counts = per_resource(allocate_cost_opt(s, c));
    CHECK(counts.count(0) == 0);
    CHECK(counts.at(1) == 4);
  }

  TEST_CASE("scripted stall: deadline still met")
  {
    // Cheap resource runs 30 s jobs until t=900, then hangs; the dear one
    // always runs 30 s jobs. The driver dispatches at every 10 s tick.
    auto c = config(3600, 1e9, Strategy::cost_opt);
    c.rate_window = 300;
    auto s = ScheduleState::create(names(120), {res("cheap", 2, 1.0), res("dear", 2, 3.0)});
    std::map<std::size_t, double> ends;
    int dear_after_warmup_before_stall = 0;
    int dear_after_stall = 0;
    const double stall_at = 900;
    for (double t = 0; t <= c.deadline && !is_terminal(s.status); t += 10) {
      s.clock = t;
      for (auto it = ends.begin(); it != ends.end();) {
        if (it->second <= t) {
          account(s, Completion{it->first, *s.jobs[it->first].resource, 30, true, false, it->second}, c);
          it = ends.erase(it);
        } else {
          ++it;
        }
      }
      s.clock = t;
      if (is_terminal(check_constraints(s, c))) {
        break;
      }
      const auto as = allocate(s, c);
      apply(s, as);
      for (const auto & a : as) {
        const bool hangs = a.resource == 0 && t >= stall_at;
        ends[a.job] = hangs ? INFINITY : t + 30;
        if (a.resource == 1 && t >= c.warmup() && t < stall_at) {
          ++dear_after_warmup_before_stall;
        }
        if (a.resource == 1 && t >= stall_at) {
          ++dear_after_stall;
        }
      }
      check_invariants(s, c);
    }
    CHECK(dear_after_warmup_before_stall == 0);
    CHECK(dear_after_stall > 0);
    CHECK(s.status == Status::running);
    CHECK(s.pending.empty());
    CHECK(s.done == 118);
  }
}

TEST_SUITE("broker ledger properties")
{
  TEST_CASE("random schedules keep the invariants")
  {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 150; ++trial) {
      auto c = config(2000 + 2000 * u(rng), 50 + 3000 * u(rng), rng() % 2 ? Strategy::time_opt : Strategy::cost_opt);
      std::vector<ResourceDesc> rs;
      const auto nres = 1 + rng() % 4;
      for (std::size_t r = 0; r < nres; ++r) {
        rs.push_back(res("r" + std::to_string(r), 1 + static_cast<int>(rng() % 4), static_cast<double>(rng() % 4)));
      }
      auto s = ScheduleState::create(names(5 + rng() % 40), rs);
      std::vector<std::size_t> running;
      while (!is_terminal(check_constraints(s, c))) {
        s.clock += 5 + 40 * u(rng);
        const auto as = allocate(s, c);
        apply(s, as);
        for (const auto & a : as) {
          running.push_back(a.job);
        }
        // Finish a random subset; some exceed their lease and ask for more.
        std::vector<std::size_t> keep;
        for (auto j : running) {
          if (u(rng) < 0.5) {
            keep.push_back(j);
            continue;
          }
          const double want = 10 + 100 * u(rng);
          bool exhausted = false;
          while (s.jobs[j].lease < want) {
            if (!(extend_lease(s, j, c) > 0)) {
              exhausted = true;
              break;
            }
          }
          const double used = std::min(want, s.jobs[j].lease);
          account(s, Completion{j, *s.jobs[j].resource, used, !exhausted && u(rng) > 0.1, exhausted, s.clock}, c);
        }
        running = keep;
        check_invariants(s, c);
      }
      CHECK(s.spent <= c.budget);
      if (s.status == Status::completed) {
        CHECK(s.pending.empty());
        CHECK(s.running == 0);
      }
      if (s.status == Status::deadline_missed) {
        CHECK(s.clock > c.deadline);
      }
    }
  }
}
