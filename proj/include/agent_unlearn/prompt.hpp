#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "agent_unlearn/constraints.hpp"
#include "agent_unlearn/gridworld.hpp"
#include "agent_unlearn/memory.hpp"

namespace au::agent {

inline constexpr std::size_t kDefaultExcerptSize = 50;

struct PromptContext {
  std::string task_text;
  std::string state_rendering;
  std::string memory_excerpt;
  std::string directives;

  // Full text handed to a language model.
  std::string render() const;

  friend bool operator==(const PromptContext&, const PromptContext&) = default;
};

enum class TaskKind { kCollect, kReach };

// "collect all treasures" or "reach r,c".
struct TaskSpec {
  TaskKind kind = TaskKind::kCollect;
  Coord goal;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

std::string render_task(const TaskSpec& task);
TaskSpec parse_task(std::string_view text);

// What a policy can read back out of the state section of a prompt.
struct ObservedState {
  std::string env_id;
  AgentState state;
  std::vector<Coord> trail;  // recent positions, oldest first, current last
};

// Lines "env <id>", "position r,c", "collected r,c r,c|none", "trail ...|none",
// then an optional "map" line followed by the grid text.
std::string render_state(const std::string& env_id, const AgentState& state,
                         const std::vector<Coord>& trail, const GridSpec* map = nullptr);
ObservedState parse_state(std::string_view rendering);

struct PromptOptions {
  std::size_t excerpt_size = kDefaultExcerptSize;
  std::vector<Coord> trail;
  const GridSpec* map = nullptr;
};

std::string render_memory_excerpt(const MemoryStore& memory, const std::string& env_id,
                                  std::size_t k);

PromptContext assemble_prompt(const std::string& task, const AgentState& state,
                              const MemoryStore& memory, const ConstraintSet& constraints,
                              const std::string& env_id, const PromptOptions& options = {});

}  // namespace au::agent
