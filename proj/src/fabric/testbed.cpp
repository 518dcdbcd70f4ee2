#include "vlab/fabric/testbed.hpp"

#include "vlab/digest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>

namespace vlab::fabric
{

namespace
{

constexpr double inf = std::numeric_limits<double>::infinity();

std::optional<double> to_double(std::string_view text)
{
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

std::vector<std::string_view> split(std::string_view text, char sep)
{
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = text.find(sep, start);
    out.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) {
      return out;
    }
    start = pos + 1;
  }
}

std::vector<Window> parse_windows(std::string_view text)
{
  std::vector<Window> windows;
  for (auto part : split(text, ',')) {
    auto dash = part.find('-');
    if (dash == std::string_view::npos) {
      throw TestbedError("availability window '" + std::string(part) + "' is not from-to");
    }
    auto from = to_double(part.substr(0, dash));
    auto to_text = part.substr(dash + 1);
    auto to = to_text.empty() ? std::optional<double>(inf) : to_double(to_text);
    if (!from || !to || *from < 0 || *to <= *from) {
      throw TestbedError("bad availability window '" + std::string(part) + "'");
    }
    windows.push_back({*from, *to});
  }
  std::sort(windows.begin(), windows.end(), [](const Window & a, const Window & b) { return a.from < b.from; });
  for (std::size_t i = 1; i < windows.size(); ++i) {
    if (windows[i].from < windows[i - 1].to) {
      throw TestbedError("availability windows overlap");
    }
  }
  return windows;
}

}  // namespace

ServiceModel ServiceModel::parse(std::string_view text)
{
  auto open = text.find('(');
  if (open == std::string_view::npos || text.back() != ')') {
    throw TestbedError("service model '" + std::string(text) + "' must look like name(args)");
  }
  const auto name = text.substr(0, open);
  std::vector<double> args;
  for (auto part : split(text.substr(open + 1, text.size() - open - 2), ',')) {
    auto v = to_double(part);
    if (!v) {
      throw TestbedError("bad number '" + std::string(part) + "' in service model");
    }
    args.push_back(*v);
  }
  if (name == "fixed" && args.size() == 1 && args[0] > 0) {
    return fixed(args[0]);
  }
  if (name == "uniform" && args.size() == 2 && args[0] > 0 && args[1] >= args[0]) {
    return uniform(args[0], args[1]);
  }
  if (name == "lognormal" && args.size() == 2 && args[1] >= 0) {
    return lognormal(args[0], args[1]);
  }
  throw TestbedError("unsupported service model '" + std::string(text) + "'");
}

std::string ServiceModel::to_string() const
{
  char buf[96];
  switch (kind) {
    case Kind::fixed:
      std::snprintf(buf, sizeof(buf), "fixed(%g)", a);
      break;
    case Kind::uniform:
      std::snprintf(buf, sizeof(buf), "uniform(%g,%g)", a, b);
      break;
    case Kind::lognormal:
      std::snprintf(buf, sizeof(buf), "lognormal(%g,%g)", a, b);
      break;
  }
  return buf;
}

double ServiceModel::sample(std::mt19937_64 & rng) const
{
  double t = a;
  switch (kind) {
    case Kind::fixed:
      break;
    case Kind::uniform:
      t = std::uniform_real_distribution<double>(a, b)(rng);
      break;
    case Kind::lognormal:
      t = std::lognormal_distribution<double>(a, b)(rng);
      break;
  }
  return std::max(t, 1e-3);
}

double ServiceModel::mean() const
{
  switch (kind) {
    case Kind::fixed:
      return a;
    case Kind::uniform:
      return 0.5 * (a + b);
    case Kind::lognormal:
      return std::exp(a + 0.5 * b * b);
  }
  return a;
}

bool SimResource::available_at(double t) const
{
  if (availability.empty()) {
    return true;
  }
  return std::any_of(availability.begin(), availability.end(), [t](const Window & w) { return t >= w.from && t < w.to; });
}

double SimResource::next_change(double t) const
{
  double best = inf;
  for (const auto & w : availability) {
    if (w.from > t) {
      best = std::min(best, w.from);
    }
    if (w.to > t) {
      best = std::min(best, w.to);
    }
  }
  return best;
}

std::vector<broker::ResourceDesc> Testbed::descriptors() const
{
  std::vector<broker::ResourceDesc> out;
  for (const auto & r : resources) {
    out.push_back(r.desc);
  }
  return out;
}

Testbed Testbed::parse(std::string_view text)
{
  Testbed testbed;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream words(line);
    std::vector<std::string> tokens;
    for (std::string w; words >> w;) {
      tokens.push_back(w);
    }
    if (tokens.empty()) {
      continue;
    }
    const auto where = "testbed line " + std::to_string(line_no) + ": ";
    try {
      if (tokens.size() < 4) {
        throw TestbedError("expected name cpus price model(args) [avail=...] seed=<n>");
      }
      SimResource r;
      r.desc.name = tokens[0];
      auto cpus = to_double(tokens[1]);
      if (!cpus || *cpus < 1 || *cpus != std::floor(*cpus)) {
        throw TestbedError("cpus must be a positive integer");
      }
      r.desc.cpus = static_cast<int>(*cpus);
      auto price = to_double(tokens[2]);
      if (!price || *price < 0) {
        throw TestbedError("price must be a non-negative number");
      }
      r.desc.price = *price;
      r.model = ServiceModel::parse(tokens[3]);
      bool seeded = false;
      for (std::size_t i = 4; i < tokens.size(); ++i) {
        std::string_view tok = tokens[i];
        auto eq = tok.find('=');
        if (eq == std::string_view::npos) {
          throw TestbedError("unexpected token '" + tokens[i] + "'");
        }
        auto key = tok.substr(0, eq);
        auto value = tok.substr(eq + 1);
        if (key == "avail") {
          r.availability = parse_windows(value);
        } else if (key == "seed") {
          std::uint64_t seed = 0;
          auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), seed);
          if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
            throw TestbedError("seed must be a non-negative integer");
          }
          r.seed = seed;
          seeded = true;
        } else if (key == "fetch") {
          auto v = to_double(value);
          if (!v || *v < 0) {
            throw TestbedError("fetch latency must be non-negative");
          }
          r.fetch_latency = *v;
        } else if (key == "fail") {
          auto v = to_double(value);
          if (!v || *v < 0 || *v > 1) {
            throw TestbedError("fail must lie in [0, 1]");
          }
          r.failure_probability = *v;
        } else {
          throw TestbedError("unknown option '" + std::string(key) + "'");
        }
      }
      if (!seeded) {
        throw TestbedError("missing seed=<n>");
      }
      for (const auto & other : testbed.resources) {
        if (other.desc.name == r.desc.name) {
          throw TestbedError("duplicate resource '" + r.desc.name + "'");
        }
      }
      r.desc.endpoint = testbed.resources.size();
      testbed.resources.push_back(std::move(r));
    } catch (const TestbedError & e) {
      throw TestbedError(where + e.what());
    }
  }
  return testbed;
}

Testbed Testbed::load(const std::filesystem::path & path)
{
  return parse(read_file(path));
}

}  // namespace vlab::fabric
