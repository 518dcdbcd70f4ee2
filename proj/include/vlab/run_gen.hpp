// run_gen.hpp - expand a plan and user selections into the run file.
#pragma once

#include "vlab/plan_lang.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vlab::rungen
{

/// One job: its unique name and a value for every declared parameter, in
/// declaration order.
struct JobSpec
{
  std::string jobname;
  std::vector<std::pair<std::string, std::string>> bindings;

  const std::string * find(std::string_view name) const;
  plan::Bindings as_bindings() const;

  friend bool operator==(const JobSpec &, const JobSpec &) = default;
};

struct RunFile
{
  std::string plan_digest;
  std::vector<JobSpec> jobs;

  friend bool operator==(const RunFile &, const RunFile &) = default;
};

/// Selected values per parameter name; parameters absent from the map use
/// their declared defaults or full range.
using Selections = std::map<std::string, std::vector<std::string>, std::less<>>;

struct GenerateOptions
{
  std::int64_t job_cap = 10'000'000;
};

class RunFileError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Checksum identifying a plan, taken over its canonical serialization.
std::string plan_digest(const plan::PlanFile & plan);

/// Cross product of all parameter value sets, last-declared parameter varying
/// fastest. Jobs are named "j" + 1-based index zero-padded to the width of
/// the job count.
RunFile generate_jobs(const plan::PlanFile & plan, const Selections & selections, const GenerateOptions & options = {});

/// Number of jobs generate_jobs would produce, computed without expanding.
std::int64_t count_jobs(const plan::PlanFile & plan, const Selections & selections, const GenerateOptions & options = {});

/// Parses `name=a..b` (integer range) or `name=v1,v2,...`.
std::pair<std::string, std::vector<std::string>> parse_selection(std::string_view spec);

std::string write_run_file(const RunFile & run);

struct ReadRunResult
{
  RunFile run;
  std::vector<std::string> warnings;
};

/// Parses run-file text. When `expected_digest` is supplied and differs from
/// the header, a warning is added and the jobs are still returned.
ReadRunResult read_run_file(std::string_view text, std::optional<std::string_view> expected_digest = std::nullopt);

std::string percent_encode(std::string_view value);
std::string percent_decode(std::string_view value);

}  // namespace vlab::rungen
