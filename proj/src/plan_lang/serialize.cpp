#include "vlab/plan_lang.hpp"

#include <sstream>

namespace vlab::plan
{

namespace
{

template <class... Ts>
struct overloaded : Ts...
{
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string quoted(const std::string & s) { return "\"" + s + "\""; }

}  // namespace

std::string serialize_plan(const PlanFile & plan)
{
  std::ostringstream out;
  for (const auto & p : plan.parameters) {
    out << "parameter " << p.name;
    if (p.label) {
      out << " label " << quoted(*p.label);
    }
    std::visit(
      overloaded{
        [&](const TextSelectOneOf & d) {
          out << " text select oneof";
          for (const auto & v : d.values) {
            out << ' ' << quoted(v);
          }
          if (d.default_value) {
            out << " default " << quoted(*d.default_value);
          }
        },
        [&](const TextDefault & d) { out << " text default " << quoted(d.value); },
        [&](const IntegerDefault & d) { out << " integer default " << d.value; },
        [&](const IntegerRange & d) {
          out << " integer range from " << d.from << " to " << d.to << " step " << d.step;
        },
        [&](const FloatDefault & d) { out << " float default " << d.text; },
      },
      p.domain);
    out << ";\n";
  }
  for (const auto & task : plan.tasks) {
    out << "task " << to_string(task.kind) << '\n';
    for (const auto & cmd : task.commands) {
      out << "  ";
      std::visit(
        overloaded{
          [&](const CopyToNode & c) { out << "copy " << c.src << " node:" << c.dst; },
          [&](const CopyFromNode & c) { out << "copy node:" << c.src << ' ' << c.dst; },
          [&](const Substitute & c) {
            out << (c.on_node ? "node:" : "") << "substitute " << c.input << ' ' << c.output;
          },
          [&](const Execute & c) {
            out << (c.on_node ? "node:" : "") << "execute";
            for (const auto & a : c.argv) {
              out << ' ' << a;
            }
          },
        },
        cmd.action);
      out << '\n';
    }
    out << "endtask\n";
  }
  return out.str();
}

}  // namespace vlab::plan
