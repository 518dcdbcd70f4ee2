// plan_lang.hpp - declarative experiment plans: parameters, task scripts,
// value enumeration and placemaker substitution.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace vlab::plan
{

/// Line number carried for diagnostics only. Never participates in equality,
/// so a re-parsed plan compares equal regardless of layout.
struct SourceLine
{
  int value = 0;
  friend bool operator==(SourceLine, SourceLine) { return true; }
};

struct Diagnostic
{
  int line = 0;
  std::string message;

  friend bool operator==(const Diagnostic &, const Diagnostic &) = default;
};

/// Renders `<file>:<line>: <message>`.
std::string format_diagnostic(std::string_view file, const Diagnostic & diag);

// ---------------------------------------------------------------------------
// Parameter domains

struct TextSelectOneOf
{
  std::vector<std::string> values;
  std::optional<std::string> default_value;
  friend bool operator==(const TextSelectOneOf &, const TextSelectOneOf &) = default;
};

struct TextDefault
{
  std::string value;
  friend bool operator==(const TextDefault &, const TextDefault &) = default;
};

struct IntegerDefault
{
  std::int64_t value = 0;
  friend bool operator==(const IntegerDefault &, const IntegerDefault &) = default;
};

struct IntegerRange
{
  std::int64_t from = 0;
  std::int64_t to = 0;
  std::int64_t step = 1;
  friend bool operator==(const IntegerRange &, const IntegerRange &) = default;
};

/// Float defaults keep the literal as written next to its parsed value, so
/// rendering never drifts from the source text.
struct FloatDefault
{
  std::string text;
  double value = 0.0;
  friend bool operator==(const FloatDefault & a, const FloatDefault & b) { return a.text == b.text; }
};

using ParameterDomain = std::variant<TextSelectOneOf, TextDefault, IntegerDefault, IntegerRange, FloatDefault>;

struct ParameterDecl
{
  std::string name;
  std::optional<std::string> label;
  ParameterDomain domain;
  SourceLine line;

  friend bool operator==(const ParameterDecl &, const ParameterDecl &) = default;
};

// ---------------------------------------------------------------------------
// Task scripts

struct CopyToNode
{
  std::string src;
  std::string dst;
  friend bool operator==(const CopyToNode &, const CopyToNode &) = default;
};

struct CopyFromNode
{
  std::string src;
  std::string dst;
  friend bool operator==(const CopyFromNode &, const CopyFromNode &) = default;
};

struct Substitute
{
  std::string input;
  std::string output;
  bool on_node = true;
  friend bool operator==(const Substitute &, const Substitute &) = default;
};

struct Execute
{
  std::vector<std::string> argv;
  bool on_node = true;
  friend bool operator==(const Execute &, const Execute &) = default;
};

struct Command
{
  std::variant<CopyToNode, CopyFromNode, Substitute, Execute> action;
  SourceLine line;

  friend bool operator==(const Command &, const Command &) = default;
};

enum class TaskKind { nodestart, main };

std::string_view to_string(TaskKind kind);

struct TaskScript
{
  TaskKind kind = TaskKind::main;
  std::vector<Command> commands;
  SourceLine line;

  friend bool operator==(const TaskScript &, const TaskScript &) = default;
};

struct PlanFile
{
  std::vector<ParameterDecl> parameters;
  std::vector<TaskScript> tasks;

  const ParameterDecl * find_parameter(std::string_view name) const;
  /// First task of the given kind, or nullptr.
  const TaskScript * find_task(TaskKind kind) const;

  friend bool operator==(const PlanFile &, const PlanFile &) = default;
};

/// Names injected by the execution layer; plans may reference but not declare them.
inline constexpr std::string_view pseudo_parameters[] = {"HOME", "OS", "jobname"};
bool is_pseudo_parameter(std::string_view name);
bool is_identifier(std::string_view text);

// ---------------------------------------------------------------------------
// Operations

struct ParseResult
{
  std::optional<PlanFile> plan;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return plan.has_value(); }
};

/// Parses a full plan. Never throws on malformed input: every syntax problem
/// becomes a diagnostic and `plan` is left empty.
ParseResult parse_plan(std::string_view source);

/// Canonical text form; parse_plan(serialize_plan(p)) yields p.
std::string serialize_plan(const PlanFile & plan);

/// Semantic checks on a parsed plan: unresolved placemakers, task multiplicity,
/// pseudo-parameter declarations.
std::vector<Diagnostic> validate_plan(const PlanFile & plan);

/// A parameter value in its rendered form, tagged with the kind it came from.
struct Value
{
  enum class Kind { text, integer, decimal };
  Kind kind = Kind::text;
  std::string text;

  friend bool operator==(const Value &, const Value &) = default;
};

class PlanError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Values a parameter takes in a run. `selection`, when given, restricts range
/// and oneof domains or overrides a default; values are given as text.
/// Throws PlanError when a selected value lies outside the domain.
std::vector<Value> enumerate_values(
  const ParameterDecl & decl, const std::optional<std::vector<std::string>> & selection = std::nullopt);

/// Number of values an integer range yields without materializing it.
std::int64_t range_size(const IntegerRange & range);

// ---------------------------------------------------------------------------
// Placemaker substitution

using Bindings = std::map<std::string, std::string, std::less<>>;

class SubstitutionError : public std::runtime_error
{
public:
  SubstitutionError(std::string message, std::vector<std::string> unbound);
  /// Names referenced but missing from the bindings, in order of first use.
  const std::vector<std::string> & unbound() const { return unbound_; }

private:
  std::vector<std::string> unbound_;
};

/// Replaces `$name` and `${name}` with bound values; `$$` yields `$`.
std::string substitute(std::string_view text, const Bindings & bindings);

/// Placemaker names referenced by a template, in order of appearance, without
/// duplicates. Throws SubstitutionError on malformed placemakers.
std::vector<std::string> placemakers(std::string_view text);

}  // namespace vlab::plan
