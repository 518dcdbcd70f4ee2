#include "vlab/run_gen.hpp"

#include "vlab/digest.hpp"

#include <charconv>
#include <set>
#include <sstream>

namespace vlab::rungen
{

namespace
{

std::vector<std::vector<plan::Value>> value_sets(const plan::PlanFile & plan, const Selections & selections)
{
  for (const auto & [name, values] : selections) {
    if (!plan.find_parameter(name)) {
      throw RunFileError("selection names unknown parameter '" + name + "'");
    }
  }
  std::vector<std::vector<plan::Value>> sets;
  sets.reserve(plan.parameters.size());
  for (const auto & decl : plan.parameters) {
    auto it = selections.find(decl.name);
    std::optional<std::vector<std::string>> selection;
    if (it != selections.end()) {
      selection = it->second;
    }
    auto values = plan::enumerate_values(decl, selection);
    if (values.empty()) {
      throw RunFileError("empty selection for parameter '" + decl.name + "'");
    }
    sets.push_back(std::move(values));
  }
  return sets;
}

// Saturating product of set sizes; returns cap + 1 once the cap is exceeded.
std::int64_t bounded_product(const std::vector<std::int64_t> & sizes, std::int64_t cap)
{
  std::int64_t product = 1;
  for (auto n : sizes) {
    if (n == 0) {
      return 0;
    }
    if (product > cap / n) {
      return cap + 1;
    }
    product *= n;
  }
  return product;
}

std::vector<std::int64_t> set_sizes(const plan::PlanFile & plan, const Selections & selections)
{
  std::vector<std::int64_t> sizes;
  for (const auto & decl : plan.parameters) {
    const auto * range = std::get_if<plan::IntegerRange>(&decl.domain);
    if (range && selections.find(decl.name) == selections.end()) {
      sizes.push_back(plan::range_size(*range));
    } else {
      auto it = selections.find(decl.name);
      std::optional<std::vector<std::string>> selection;
      if (it != selections.end()) {
        selection = it->second;
      }
      sizes.push_back(static_cast<std::int64_t>(plan::enumerate_values(decl, selection).size()));
    }
  }
  return sizes;
}

int hex_value(char c)
{
  if (c >= '0' && c <= '9') {
    return c - '0';
  }
  if (c >= 'A' && c <= 'F') {
    return c - 'A' + 10;
  }
  if (c >= 'a' && c <= 'f') {
    return c - 'a' + 10;
  }
  return -1;
}

std::vector<std::string_view> split(std::string_view text, char sep)
{
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    auto pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) {
      return parts;
    }
    start = pos + 1;
  }
}

}  // namespace

const std::string * JobSpec::find(std::string_view name) const
{
  for (const auto & [key, value] : bindings) {
    if (key == name) {
      return &value;
    }
  }
  return nullptr;
}

plan::Bindings JobSpec::as_bindings() const
{
  plan::Bindings out;
  for (const auto & [key, value] : bindings) {
    out.emplace(key, value);
  }
  return out;
}

std::string plan_digest(const plan::PlanFile & plan)
{
  return sha256_hex(plan::serialize_plan(plan));
}

std::int64_t count_jobs(const plan::PlanFile & plan, const Selections & selections, const GenerateOptions & options)
{
  for (const auto & [name, values] : selections) {
    if (!plan.find_parameter(name)) {
      throw RunFileError("selection names unknown parameter '" + name + "'");
    }
  }
  return bounded_product(set_sizes(plan, selections), options.job_cap);
}

RunFile generate_jobs(const plan::PlanFile & plan, const Selections & selections, const GenerateOptions & options)
{
  const auto total = count_jobs(plan, selections, options);
  if (total > options.job_cap) {
    throw RunFileError("job count exceeds the cap of " + std::to_string(options.job_cap));
  }
  const auto sets = value_sets(plan, selections);

  RunFile run;
  run.plan_digest = plan_digest(plan);
  run.jobs.reserve(static_cast<std::size_t>(total));
  const auto width = std::to_string(total).size();
  std::vector<std::size_t> digit(sets.size(), 0);
  for (std::int64_t index = 1; index <= total; ++index) {
    JobSpec job;
    auto number = std::to_string(index);
    job.jobname = "j" + std::string(width - number.size(), '0') + number;
    job.bindings.reserve(sets.size());
    for (std::size_t p = 0; p < sets.size(); ++p) {
      job.bindings.emplace_back(plan.parameters[p].name, sets[p][digit[p]].text);
    }
    run.jobs.push_back(std::move(job));
    // Mixed-radix increment, last parameter fastest.
    for (std::size_t p = sets.size(); p-- > 0;) {
      if (++digit[p] < sets[p].size()) {
        break;
      }
      digit[p] = 0;
    }
  }
  return run;
}

std::pair<std::string, std::vector<std::string>> parse_selection(std::string_view spec)
{
  const auto eq = spec.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw RunFileError("selection must look like name=a..b or name=v1,v2: '" + std::string(spec) + "'");
  }
  std::string name(spec.substr(0, eq));
  std::string_view rhs = spec.substr(eq + 1);
  std::vector<std::string> values;
  if (const auto dots = rhs.find(".."); dots != std::string_view::npos) {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
    auto lo_text = rhs.substr(0, dots);
    auto hi_text = rhs.substr(dots + 2);
    auto r1 = std::from_chars(lo_text.data(), lo_text.data() + lo_text.size(), lo);
    auto r2 = std::from_chars(hi_text.data(), hi_text.data() + hi_text.size(), hi);
    if (r1.ec != std::errc() || r1.ptr != lo_text.data() + lo_text.size() || r2.ec != std::errc() ||
        r2.ptr != hi_text.data() + hi_text.size() || lo > hi) {
      throw RunFileError("malformed selection range '" + std::string(rhs) + "'");
    }
    if (hi - lo >= 10'000'000) {
      throw RunFileError("selection range too large '" + std::string(rhs) + "'");
    }
    for (auto v = lo; v <= hi; ++v) {
      values.push_back(std::to_string(v));
    }
  } else {
    for (auto part : split(rhs, ',')) {
      values.emplace_back(part);
    }
  }
  return {std::move(name), std::move(values)};
}

std::string percent_encode(std::string_view value)
{
  std::string out;
  out.reserve(value.size());
  for (char c : value) {
    switch (c) {
      case '%':
        out += "%25";
        break;
      case '\t':
        out += "%09";
        break;
      case '\n':
        out += "%0A";
        break;
      case '\r':
        out += "%0D";
        break;
      default:
        out.push_back(c);
    }
  }
  return out;
}

std::string percent_decode(std::string_view value)
{
  std::string out;
  out.reserve(value.size());
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (value[i] != '%') {
      out.push_back(value[i]);
      continue;
    }
    if (i + 2 >= value.size()) {
      throw RunFileError("truncated percent escape");
    }
    const int hi = hex_value(value[i + 1]);
    const int lo = hex_value(value[i + 2]);
    if (hi < 0 || lo < 0) {
      throw RunFileError("malformed percent escape");
    }
    out.push_back(static_cast<char>(hi * 16 + lo));
    i += 2;
  }
  return out;
}

std::string write_run_file(const RunFile & run)
{
  std::ostringstream out;
  out << "RUNFILE 1 " << run.jobs.size() << ' ' << run.plan_digest << '\n';
  for (const auto & job : run.jobs) {
    out << job.jobname;
    for (const auto & [name, value] : job.bindings) {
      out << '\t' << name << '=' << percent_encode(value);
    }
    out << '\n';
  }
  return out.str();
}

ReadRunResult read_run_file(std::string_view text, std::optional<std::string_view> expected_digest)
{
  ReadRunResult result;
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) {
    lines.pop_back();
  }
  if (lines.empty()) {
    throw RunFileError("line 1: missing RUNFILE header");
  }
  auto strip_cr = [](std::string_view line) {
    return (!line.empty() && line.back() == '\r') ? line.substr(0, line.size() - 1) : line;
  };

  std::istringstream header{std::string(strip_cr(lines[0]))};
  std::string magic;
  int version = 0;
  long long count = -1;
  std::string digest;
  std::string extra;
  if (!(header >> magic >> version >> count >> digest) || magic != "RUNFILE" || (header >> extra) || count < 0) {
    throw RunFileError("line 1: malformed RUNFILE header");
  }
  if (version != 1) {
    throw RunFileError("line 1: unsupported run file version " + std::to_string(version));
  }
  if (static_cast<std::size_t>(count) != lines.size() - 1) {
    throw RunFileError(
      "header declares " + std::to_string(count) + " jobs but file has " + std::to_string(lines.size() - 1));
  }
  result.run.plan_digest = digest;
  if (expected_digest && *expected_digest != digest) {
    result.warnings.push_back("plan digest mismatch: run file was generated from a different plan");
  }

  std::set<std::string, std::less<>> names;
  result.run.jobs.reserve(static_cast<std::size_t>(count));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto where = "line " + std::to_string(i + 1) + ": ";
    auto fields = split(strip_cr(lines[i]), '\t');
    JobSpec job;
    job.jobname = std::string(fields[0]);
    if (job.jobname.empty()) {
      throw RunFileError(where + "empty jobname");
    }
    if (!names.insert(job.jobname).second) {
      throw RunFileError(where + "duplicate jobname '" + job.jobname + "'");
    }
    std::set<std::string_view> bound;
    for (std::size_t f = 1; f < fields.size(); ++f) {
      const auto eq = fields[f].find('=');
      if (eq == std::string_view::npos || !plan::is_identifier(fields[f].substr(0, eq))) {
        throw RunFileError(where + "malformed binding '" + std::string(fields[f]) + "'");
      }
      auto name = fields[f].substr(0, eq);
      if (!bound.insert(name).second) {
        throw RunFileError(where + "parameter '" + std::string(name) + "' bound twice");
      }
      try {
        job.bindings.emplace_back(std::string(name), percent_decode(fields[f].substr(eq + 1)));
      } catch (const RunFileError & e) {
        throw RunFileError(where + e.what());
      }
    }
    result.run.jobs.push_back(std::move(job));
  }
  return result;
}

}  // namespace vlab::rungen
