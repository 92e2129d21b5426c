#include "agent_unlearn/prompt.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <optional>

#include "agent_unlearn/error.hpp"
#include "agent_unlearn/grid_io.hpp"

namespace au::agent {
namespace {

constexpr std::string_view kCollectTask = "collect all treasures";
constexpr std::string_view kReachTask = "reach ";

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<Coord> parse_cell(std::string_view s) {
  s = trim(s);
  const auto comma = s.find(',');
  if (comma == std::string_view::npos) return std::nullopt;
  Coord c;
  const auto a = s.substr(0, comma);
  const auto b = s.substr(comma + 1);
  const auto ra = std::from_chars(a.data(), a.data() + a.size(), c.row);
  const auto rb = std::from_chars(b.data(), b.data() + b.size(), c.col);
  if (ra.ec != std::errc() || ra.ptr != a.data() + a.size() || a.empty()) return std::nullopt;
  if (rb.ec != std::errc() || rb.ptr != b.data() + b.size() || b.empty()) return std::nullopt;
  return c;
}

template <typename Range>
std::string join_cells(const Range& cells) {
  std::string out;
  for (const Coord& c : cells) {
    if (!out.empty()) out.push_back(' ');
    out += env::to_string(c);
  }
  return out.empty() ? "none" : out;
}

std::vector<Coord> parse_cell_list(std::string_view s) {
  s = trim(s);
  std::vector<Coord> out;
  if (s == "none") return out;
  while (!s.empty()) {
    const auto sp = s.find(' ');
    const auto token = s.substr(0, sp);
    const auto cell = parse_cell(token);
    if (!cell) fail(ErrorCode::kParse, "bad cell '" + std::string(token) + "' in state rendering");
    out.push_back(*cell);
    s = sp == std::string_view::npos ? std::string_view{} : trim(s.substr(sp + 1));
  }
  return out;
}

}  // namespace

std::string PromptContext::render() const {
  std::string out =
      "You control an agent in a grid world. Rows grow downward, columns grow to the right.\n"
      "Answer with exactly one action letter: U, D, L or R.\n\n";
  out += "Task:\n" + task_text + "\n\n";
  out += "State:\n" + state_rendering + "\n";
  out += "Memory:\n" + (memory_excerpt.empty() ? std::string("(empty)\n") : memory_excerpt) + "\n";
  out += "Constraints:\n" + (directives.empty() ? std::string("(none)\n") : directives);
  return out;
}

std::string render_task(const TaskSpec& task) {
  if (task.kind == TaskKind::kCollect) return std::string(kCollectTask);
  return std::string(kReachTask) + env::to_string(task.goal);
}

TaskSpec parse_task(std::string_view text) {
  const auto t = trim(text);
  if (t == kCollectTask) return TaskSpec{};
  if (t.starts_with(kReachTask)) {
    if (const auto goal = parse_cell(t.substr(kReachTask.size()))) {
      return TaskSpec{TaskKind::kReach, *goal};
    }
  }
  fail(ErrorCode::kParse, "unrecognized task '" + std::string(t) + "'");
}

std::string render_state(const std::string& env_id, const AgentState& state,
                         const std::vector<Coord>& trail, const GridSpec* map) {
  std::string out = "env " + env_id + "\n";
  out += "position " + env::to_string(state.position) + "\n";
  out += "collected " + join_cells(state.collected) + "\n";
  out += "trail " + join_cells(trail) + "\n";
  if (map != nullptr) out += "map\n" + env::to_text(*map);
  return out;
}

ObservedState parse_state(std::string_view rendering) {
  ObservedState out;
  bool have_env = false;
  bool have_position = false;
  while (!rendering.empty()) {
    const auto nl = rendering.find('\n');
    const auto line = trim(rendering.substr(0, nl));
    rendering = nl == std::string_view::npos ? std::string_view{} : rendering.substr(nl + 1);
    if (line == "map") break;
    const auto sp = line.find(' ');
    const auto key = line.substr(0, sp);
    const auto value = sp == std::string_view::npos ? std::string_view{} : trim(line.substr(sp + 1));
    if (key == "env") {
      out.env_id = std::string(value);
      have_env = !value.empty();
    } else if (key == "position") {
      const auto cell = parse_cell(value);
      if (!cell) fail(ErrorCode::kParse, "bad position '" + std::string(value) + "'");
      out.state.position = *cell;
      have_position = true;
    } else if (key == "collected") {
      for (const Coord& c : parse_cell_list(value)) out.state.collected.insert(c);
    } else if (key == "trail") {
      out.trail = parse_cell_list(value);
    }
  }
  if (!have_env || !have_position) fail(ErrorCode::kParse, "state rendering lacks env or position");
  return out;
}

std::string render_memory_excerpt(const MemoryStore& memory, const std::string& env_id,
                                  std::size_t k) {
  std::string out;
  char reward[32];
  for (const MemoryEntry& e : memory.recent(env_id, k)) {
    std::snprintf(reward, sizeof reward, "%.2f", e.reward);
    out += env::to_string(e.state.position) + " " + env::action_token(e.action) + " " + reward + "\n";
  }
  return out;
}

PromptContext assemble_prompt(const std::string& task, const AgentState& state,
                              const MemoryStore& memory, const ConstraintSet& constraints,
                              const std::string& env_id, const PromptOptions& options) {
  PromptContext ctx;
  ctx.task_text = task;
  ctx.state_rendering = render_state(env_id, state, options.trail, options.map);
  ctx.memory_excerpt = render_memory_excerpt(memory, env_id, options.excerpt_size);
  ctx.directives = serialize_directives(constraints.directives_for(env_id));
  return ctx;
}

}  // namespace au::agent
