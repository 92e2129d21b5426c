#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "agent_unlearn/constraints.hpp"
#include "agent_unlearn/gridworld.hpp"
#include "agent_unlearn/memory.hpp"
#include "agent_unlearn/policy.hpp"
#include "agent_unlearn/prompt.hpp"

namespace au::agent {

using env::Trajectory;

struct EpisodeResult {
  Trajectory trajectory;
  std::size_t steps = 0;
  bool success = false;
  double total_reward = 0.0;
  AgentState final_state;

  // Every position occupied during the episode, start and end included.
  std::vector<Coord> positions() const;
  bool visits(const Coord& c) const;
};

struct EpisodeOptions {
  TaskSpec task;
  std::optional<Coord> start;  // defaults to the grid start
  std::size_t excerpt_size = kDefaultExcerptSize;
  bool include_map = false;
  bool record = true;
};

// Agent loop: assemble prompt, decide, step, record (s, a, r), until the task
// is done or the budget runs out. Nothing is recorded in a forgotten
// environment, on an avoided cell, or as part of a forbidden sequence.
EpisodeResult run_episode(const GridSpec& spec, PolicyBackend& backend, MemoryStore& memory,
                          const ConstraintSet& constraints, std::size_t budget,
                          const EpisodeOptions& options = {});

}  // namespace au::agent
