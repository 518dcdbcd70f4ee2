#include "vlab/plan_lang.hpp"

#include <set>

namespace vlab::plan
{

namespace
{

std::vector<std::string_view> command_templates(const Command & cmd)
{
  std::vector<std::string_view> out;
  std::visit(
    [&](const auto & action) {
      using T = std::decay_t<decltype(action)>;
      if constexpr (std::is_same_v<T, CopyToNode> || std::is_same_v<T, CopyFromNode>) {
        out = {action.src, action.dst};
      } else if constexpr (std::is_same_v<T, Substitute>) {
        out = {action.input, action.output};
      } else {
        out.assign(action.argv.begin(), action.argv.end());
      }
    },
    cmd.action);
  return out;
}

}  // namespace

std::vector<Diagnostic> validate_plan(const PlanFile & plan)
{
  std::vector<Diagnostic> diags;

  for (const auto & p : plan.parameters) {
    if (is_pseudo_parameter(p.name)) {
      diags.push_back({p.line.value, "'" + p.name + "' is a pseudo-parameter and cannot be declared"});
    }
  }

  int main_count = 0;
  int nodestart_count = 0;
  for (const auto & task : plan.tasks) {
    int & count = task.kind == TaskKind::main ? main_count : nodestart_count;
    if (++count == 2) {
      diags.push_back({task.line.value, "duplicate task '" + std::string(to_string(task.kind)) + "'"});
    }
    for (const auto & cmd : task.commands) {
      std::set<std::string, std::less<>> reported;
      for (auto text : command_templates(cmd)) {
        std::vector<std::string> names;
        try {
          names = placemakers(text);
        } catch (const SubstitutionError & e) {
          diags.push_back({cmd.line.value, e.what()});
          continue;
        }
        for (const auto & name : names) {
          if (plan.find_parameter(name) || is_pseudo_parameter(name)) {
            continue;
          }
          if (reported.insert(name).second) {
            diags.push_back({cmd.line.value, "unresolved placemaker '$" + name + "'"});
          }
        }
      }
    }
  }
  if (main_count == 0) {
    diags.push_back({0, "plan has no main task"});
  }
  return diags;
}

}  // namespace vlab::plan
