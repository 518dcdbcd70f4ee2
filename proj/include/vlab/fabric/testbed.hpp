// testbed.hpp - simulated resource descriptions and the testbed file.
#pragma once

#include "vlab/broker.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vlab::fabric
{

class TestbedError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Per-job CPU seconds.
struct ServiceModel
{
  enum class Kind { fixed, uniform, lognormal };
  Kind kind = Kind::fixed;
  /// fixed: t; uniform: lo, hi; lognormal: mu, sigma of the underlying normal.
  double a = 1.0;
  double b = 0.0;

  static ServiceModel fixed(double t) { return {Kind::fixed, t, 0.0}; }
  static ServiceModel uniform(double lo, double hi) { return {Kind::uniform, lo, hi}; }
  static ServiceModel lognormal(double mu, double sigma) { return {Kind::lognormal, mu, sigma}; }

  /// `fixed(t)`, `uniform(lo,hi)` or `lognormal(mu,sigma)`.
  static ServiceModel parse(std::string_view text);
  std::string to_string() const;

  /// Always positive.
  double sample(std::mt19937_64 & rng) const;
  double mean() const;

  friend bool operator==(const ServiceModel &, const ServiceModel &) = default;
};

/// Interval of virtual time during which the CPUs are usable; `to` may be infinite.
struct Window
{
  double from = 0.0;
  double to = 0.0;

  friend bool operator==(const Window &, const Window &) = default;
};

struct SimResource
{
  broker::ResourceDesc desc;
  ServiceModel model;
  /// Empty means always available.
  std::vector<Window> availability;
  std::uint64_t seed = 0;
  /// Wall seconds spent fetching the molecule before computing; not CPU time.
  double fetch_latency = 0.0;
  /// Chance that a job fails at the end of its run.
  double failure_probability = 0.0;

  bool available_at(double t) const;
  /// Next instant after `t` at which availability changes, or infinity.
  double next_change(double t) const;
};

struct Testbed
{
  std::vector<SimResource> resources;

  std::vector<broker::ResourceDesc> descriptors() const;

  /// One resource per line:
  ///   name cpus price model(args) [avail=from-to,...] seed=<n> [fetch=<s>] [fail=<p>]
  /// `#` starts a comment; `to` may be omitted for an open-ended window.
  static Testbed parse(std::string_view text);
  static Testbed load(const std::filesystem::path & path);
};

}  // namespace vlab::fabric
