#include "vlab/cli.hpp"

#include "vlab/broker.hpp"
#include "vlab/cdb/client.hpp"
#include "vlab/cdb/index.hpp"
#include "vlab/cdb/replica.hpp"
#include "vlab/cdb/server.hpp"
#include "vlab/digest.hpp"
#include "vlab/fabric/experiment.hpp"
#include "vlab/plan_lang.hpp"
#include "vlab/run_gen.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <optional>

namespace vlab::cli
{

namespace fs = std::filesystem;

namespace
{

struct Failure : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

struct RunArgs
{
  std::string plan;
  std::string testbed;
  double deadline = 3600.0;
  double budget = 50000.0;
  std::string strategy = "time";
  std::uint64_t seed = 0;
  std::string mode = "sim";
  std::string trace;
  std::string report;
  std::string report_csv;
  std::vector<std::string> select;
  std::string home;
  std::optional<double> tick;
};

// Parses and validates a plan file, printing diagnostics.
plan::PlanFile load_plan(const std::string & path, std::ostream & err)
{
  const auto text = read_file(path);
  auto parsed = plan::parse_plan(text);
  for (const auto & d : parsed.diagnostics) {
    err << plan::format_diagnostic(path, d) << '\n';
  }
  if (!parsed.ok()) {
    throw Failure("plan " + path + " does not parse");
  }
  const auto problems = plan::validate_plan(*parsed.plan);
  for (const auto & d : problems) {
    err << plan::format_diagnostic(path, d) << '\n';
  }
  if (!problems.empty()) {
    throw Failure("plan " + path + " is not valid");
  }
  return std::move(*parsed.plan);
}

rungen::Selections parse_selections(const std::vector<std::string> & specs)
{
  rungen::Selections selections;
  for (const auto & spec : specs) {
    auto [name, values] = rungen::parse_selection(spec);
    selections[name] = std::move(values);
  }
  return selections;
}

int cmd_index(const std::string & db, const std::string & idx, std::ostream & out)
{
  if (!fs::is_regular_file(db)) {
    throw Failure("database " + db + " does not exist");
  }
  const auto index = cdb::build_index_file(db);
  write_file(idx, cdb::write_index(index));
  out << index.record_count() << " records\n";
  return exit_ok;
}

int cmd_serve(const std::string & catalog, const std::string & bind, std::ostream & out)
{
  cdb::ServerConfig config;
  const auto endpoint = cdb::Endpoint::parse(bind);
  config.bind_host = endpoint.host;
  config.port = endpoint.port;
  config.databases = cdb::read_server_catalog(catalog);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  cdb::Server server(config);
  server.start();
  out << "listening " << server.endpoint().to_string() << std::endl;
  int signal = 0;
  sigwait(&signals, &signal);
  server.stop();
  out << "served " << server.requests_served() << " requests\n";
  return exit_ok;
}

int cmd_fetch(const std::string & where, const std::string & db, std::uint64_t n, std::ostream & out)
{
  const auto record = cdb::fetch(cdb::Endpoint::parse(where), db, n);
  const auto name = std::to_string(n) + ".mol2";
  write_file(name, record.bytes);
  out << name << ' ' << record.bytes.size() << '\n';
  return exit_ok;
}

int cmd_stat(const std::string & where, const std::string & db, std::ostream & out)
{
  cdb::CdbClient client(cdb::Endpoint::parse(where));
  out << client.stat(db) << '\n';
  return exit_ok;
}

int cmd_replica(const std::string & catalogue_path, const std::string & db, const std::string & policy_text,
  std::ostream & out)
{
  auto catalogue = cdb::ReplicaCatalogue::load(catalogue_path);
  const auto policy = cdb::SelectionPolicy::parse(policy_text);
  if (policy.needs_probes()) {
    cdb::probe_replicas(catalogue, db);
  }
  out << cdb::select_replica(catalogue, db, policy).to_string() << '\n';
  return exit_ok;
}

int cmd_check(const std::string & path, std::ostream & out, std::ostream & err)
{
  const auto plan = load_plan(path, err);
  out << "ok " << plan.parameters.size() << " parameters " << rungen::count_jobs(plan, {}) << " jobs\n";
  return exit_ok;
}

int cmd_generate(const std::string & path, const std::vector<std::string> & select, const std::string & output,
  std::ostream & out, std::ostream & err)
{
  const auto plan = load_plan(path, err);
  const auto run = rungen::generate_jobs(plan, parse_selections(select));
  write_file(output, rungen::write_run_file(run));
  out << run.jobs.size() << " jobs\n";
  return exit_ok;
}

int cmd_run(const RunArgs & args, std::ostream & out, std::ostream & err)
{
  const auto plan = load_plan(args.plan, err);
  const auto testbed = fabric::Testbed::load(args.testbed);
  const auto run = rungen::generate_jobs(plan, parse_selections(args.select));

  fabric::ExperimentOptions options;
  options.config.deadline = args.deadline;
  options.config.budget = args.budget;
  options.config.strategy = broker::parse_strategy(args.strategy);
  options.config.tick_interval = args.tick.value_or(args.mode == "local" ? 1.0 : 10.0);
  options.seed = args.seed;

  fabric::ExperimentResult result;
  if (args.mode == "sim") {
    result = fabric::run_sim_experiment(plan, run.jobs, testbed, options);
  } else {
    fabric::LocalOptions local;
    local.context.root = fs::absolute(args.plan).parent_path();
    std::string home = args.home;
    if (home.empty()) {
      const char * env = std::getenv("HOME");
      home = env ? env : "/";
    }
    local.context.home = fs::absolute(home).lexically_normal().string();
    local.context.os = fabric::host_os();
    result = fabric::run_local_experiment(plan, run.jobs, testbed, options, local);
  }
  for (const auto & w : result.warnings) {
    err << "vlab: " << w << '\n';
  }

  const auto text = broker::format_report_text(result.report);
  out << text;
  if (!args.report.empty()) {
    write_file(args.report, text);
  }
  if (!args.report_csv.empty()) {
    write_file(args.report_csv, broker::format_report_csv(result.report));
  }
  if (!args.trace.empty()) {
    write_file(args.trace, fabric::format_trace(result.trace));
  }
  return result.report.status == broker::Status::completed ? exit_ok : exit_constraint;
}

}  // namespace

int run_cli(int argc, const char * const * argv, std::ostream & out, std::ostream & err)
{
  CLI::App app{"virtual laboratory toolkit: plans, job generation, brokered runs and the molecule database"};
  app.require_subcommand(1);

  std::string s1;
  std::string s2;
  std::string s3;
  std::uint64_t n = 0;
  std::vector<std::string> select;

  auto * index = app.add_subcommand("index", "build the record index of a molecule database");
  index->add_option("db", s1, "database file")->required();
  index->add_option("idx", s2, "index file to write")->required();

  std::string bind = "127.0.0.1:5001";
  auto * serve = app.add_subcommand("serve", "serve the databases listed in a catalog until interrupted");
  serve->add_option("catalog", s1, "server catalog")->required();
  serve->add_option("--bind", bind, "host:port");

  auto * fetch = app.add_subcommand("fetch", "fetch molecule n and save it as <n>.mol2");
  fetch->add_option("server", s1, "host:port")->required();
  fetch->add_option("db", s2, "database name")->required();
  fetch->add_option("n", n, "molecule number")->required();

  auto * stat = app.add_subcommand("stat", "print the record count of a served database");
  stat->add_option("server", s1, "host:port")->required();
  stat->add_option("db", s2, "database name")->required();

  std::string policy = "latency";
  auto * replica = app.add_subcommand("replica", "choose a replica for a database");
  replica->add_option("catalogue", s1, "replica catalogue")->required();
  replica->add_option("db", s2, "database name")->required();
  replica->add_option("--policy", policy, "latency, cost or weighted:<alpha>");

  auto * check = app.add_subcommand("check", "parse and validate a plan");
  check->add_option("plan", s1, "plan file")->required();

  auto * generate = app.add_subcommand("generate", "write the run file for a plan");
  generate->add_option("plan", s1, "plan file")->required();
  generate->add_option("--select", select, "name=a..b or name=v1,v2");
  generate->add_option("-o", s3, "run file to write")->required();

  RunArgs run_args;
  auto * run = app.add_subcommand("run", "run an experiment under a deadline and budget");
  run->add_option("plan", run_args.plan, "plan file")->required();
  run->add_option("testbed", run_args.testbed, "testbed file")->required();
  run->add_option("--deadline", run_args.deadline, "seconds")->check(CLI::PositiveNumber);
  run->add_option("--budget", run_args.budget, "G$")->check(CLI::PositiveNumber);
  run->add_option("--strategy", run_args.strategy, "time or cost")->check(CLI::IsMember({"time", "cost"}));
  run->add_option("--seed", run_args.seed, "experiment seed");
  run->add_option("--mode", run_args.mode, "sim or local")->check(CLI::IsMember({"sim", "local"}));
  run->add_option("--trace", run_args.trace, "trace CSV to write");
  run->add_option("--report", run_args.report, "report text to write");
  run->add_option("--report-csv", run_args.report_csv, "report CSV to write");
  run->add_option("--select", run_args.select, "name=a..b or name=v1,v2");
  run->add_option("--home", run_args.home, "value of $HOME for local jobs");
  run->add_option("--tick", run_args.tick, "scheduling interval, seconds")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_usage;
  }

  try {
    if (*index) {
      return cmd_index(s1, s2, out);
    }
    if (*serve) {
      return cmd_serve(s1, bind, out);
    }
    if (*fetch) {
      return cmd_fetch(s1, s2, n, out);
    }
    if (*stat) {
      return cmd_stat(s1, s2, out);
    }
    if (*replica) {
      return cmd_replica(s1, s2, policy, out);
    }
    if (*check) {
      return cmd_check(s1, out, err);
    }
    if (*generate) {
      return cmd_generate(s1, select, s3, out, err);
    }
    if (*run) {
      return cmd_run(run_args, out, err);
    }
  } catch (const std::exception & e) {
    err << "vlab: " << e.what() << '\n';
    return exit_runtime;
  }
  return exit_usage;
}

}  // namespace vlab::cli
