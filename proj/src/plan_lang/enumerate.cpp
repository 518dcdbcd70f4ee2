#include "vlab/plan_lang.hpp"

#include <algorithm>
#include <charconv>
#include <set>

namespace vlab::plan
{

namespace
{

std::optional<std::int64_t> parse_int(std::string_view text)
{
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    return std::nullopt;
  }
  return v;
}

bool is_decimal(std::string_view text)
{
  std::size_t i = (!text.empty() && text[0] == '-') ? 1 : 0;
  const std::size_t start = i;
  while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
    ++i;
  }
  if (i == start) {
    return false;
  }
  if (i < text.size() && text[i] == '.') {
    const std::size_t frac = ++i;
    while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
      ++i;
    }
    if (i == frac) {
      return false;
    }
  }
  return i == text.size();
}

Value integer(std::int64_t v) { return Value{Value::Kind::integer, std::to_string(v)}; }

[[noreturn]] void outside(const ParameterDecl & decl, std::string_view value)
{
  throw PlanError("value '" + std::string(value) + "' is outside the domain of parameter '" + decl.name + "'");
}

std::vector<std::string> unique_in_order(const std::vector<std::string> & values)
{
  std::vector<std::string> out;
  std::set<std::string_view> seen;
  for (const auto & v : values) {
    if (seen.insert(v).second) {
      out.push_back(v);
    }
  }
  return out;
}

}  // namespace

std::int64_t range_size(const IntegerRange & range)
{
  if (range.from > range.to || range.step < 1) {
    return 0;
  }
  const auto span = static_cast<std::uint64_t>(range.to) - static_cast<std::uint64_t>(range.from);
  return static_cast<std::int64_t>(span / static_cast<std::uint64_t>(range.step)) + 1;
}

std::vector<Value> enumerate_values(
  const ParameterDecl & decl, const std::optional<std::vector<std::string>> & selection)
{
  std::vector<Value> out;

  if (const auto * range = std::get_if<IntegerRange>(&decl.domain)) {
    if (!selection) {
      const auto n = range_size(*range);
      out.reserve(static_cast<std::size_t>(n));
      for (std::int64_t k = 0; k < n; ++k) {
        out.push_back(integer(range->from + k * range->step));
      }
      return out;
    }
    std::vector<std::int64_t> picked;
    for (const auto & text : *selection) {
      auto v = parse_int(text);
      if (!v || *v < range->from || *v > range->to || (*v - range->from) % range->step != 0) {
        outside(decl, text);
      }
      picked.push_back(*v);
    }
    std::sort(picked.begin(), picked.end());
    picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
    for (auto v : picked) {
      out.push_back(integer(v));
    }
    return out;
  }

  if (const auto * oneof = std::get_if<TextSelectOneOf>(&decl.domain)) {
    if (!selection) {
      if (oneof->default_value) {
        return {Value{Value::Kind::text, *oneof->default_value}};
      }
      for (const auto & v : oneof->values) {
        out.push_back(Value{Value::Kind::text, v});
      }
      return out;
    }
    for (const auto & text : *selection) {
      if (std::find(oneof->values.begin(), oneof->values.end(), text) == oneof->values.end()) {
        outside(decl, text);
      }
    }
    for (const auto & v : oneof->values) {
      if (std::find(selection->begin(), selection->end(), v) != selection->end()) {
        out.push_back(Value{Value::Kind::text, v});
      }
    }
    return out;
  }

  if (const auto * text_default = std::get_if<TextDefault>(&decl.domain)) {
    if (!selection) {
      return {Value{Value::Kind::text, text_default->value}};
    }
    for (const auto & v : unique_in_order(*selection)) {
      out.push_back(Value{Value::Kind::text, v});
    }
    return out;
  }

  if (const auto * int_default = std::get_if<IntegerDefault>(&decl.domain)) {
    if (!selection) {
      return {integer(int_default->value)};
    }
    for (const auto & text : unique_in_order(*selection)) {
      auto v = parse_int(text);
      if (!v) {
        outside(decl, text);
      }
      out.push_back(integer(*v));
    }
    return out;
  }

  const auto & float_default = std::get<FloatDefault>(decl.domain);
  if (!selection) {
    return {Value{Value::Kind::decimal, float_default.text}};
  }
  for (const auto & text : unique_in_order(*selection)) {
    if (!is_decimal(text)) {
      outside(decl, text);
    }
    out.push_back(Value{Value::Kind::decimal, text});
  }
  return out;
}

}  // namespace vlab::plan
