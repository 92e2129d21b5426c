#include "agent_unlearn/episode.hpp"

#include <algorithm>

#include "agent_unlearn/error.hpp"

namespace au::agent {
namespace {

constexpr std::size_t kMinTrail = 4;

std::size_t trail_length(const ConstraintSet& constraints, const std::string& env_id) {
  std::size_t n = kMinTrail;
  for (const auto& seq : constraints.forbidden_sequences(env_id)) n = std::max(n, seq.size());
  return n;
}

}  // namespace

std::vector<Coord> EpisodeResult::positions() const {
  std::vector<Coord> out;
  out.reserve(trajectory.pairs.size() + 1);
  for (const auto& [state, action] : trajectory.pairs) out.push_back(state.position);
  out.push_back(final_state.position);
  return out;
}

bool EpisodeResult::visits(const Coord& c) const {
  if (final_state.position == c) return true;
  return std::any_of(trajectory.pairs.begin(), trajectory.pairs.end(),
                     [&](const auto& p) { return p.first.position == c; });
}

EpisodeResult run_episode(const GridSpec& spec, PolicyBackend& backend, MemoryStore& memory,
                          const ConstraintSet& constraints, std::size_t budget,
                          const EpisodeOptions& options) {
  if (budget < 1) fail(ErrorCode::kInvalidArgument, "episode budget must be at least 1");
  const std::string& env_id = spec.env_id();
  AgentState state = initial_state(spec);
  if (options.start) state.position = *options.start;
  check_state(spec, state);

  const std::string task_text = render_task(options.task);
  const bool reach = options.task.kind == TaskKind::kReach;
  const std::size_t keep = trail_length(constraints, env_id);
  const bool protect = constraints.is_degraded(env_id);
  const auto& avoid = constraints.forbidden_states(env_id);

  EpisodeResult result;
  PromptOptions prompt_options;
  prompt_options.excerpt_size = options.excerpt_size;
  prompt_options.map = options.include_map ? &spec : nullptr;
  prompt_options.trail = {state.position};

  const auto finished = [&](const AgentState& s) {
    if (reach) return s.position == options.task.goal;
    return s.collected.size() == spec.treasures().size();
  };
  if (finished(state)) {
    result.final_state = state;
    result.success = true;
    return result;
  }

  bool recorded = false;
  while (result.steps < budget) {
    const PromptContext prompt =
        assemble_prompt(task_text, state, memory, constraints, env_id, prompt_options);
    const Action action = backend.decide(prompt, spec);
    const env::StepOutcome out = env::step(spec, state, action);
    result.trajectory.pairs.emplace_back(state, action);
    result.total_reward += out.reward;
    ++result.steps;
    if (options.record && !protect && !avoid.contains(state.position)) {
      memory.append(MemoryEntry{env_id, state, action, out.reward});
      recorded = true;
    }
    const bool bumped_goal = reach && out.next_state.position == state.position &&
                             env::apply(state.position, action) == options.task.goal;
    state = out.next_state;
    auto& trail = prompt_options.trail;
    trail.push_back(state.position);
    if (trail.size() > keep) trail.erase(trail.begin(), trail.end() - static_cast<std::ptrdiff_t>(keep));
    if (finished(state) || bumped_goal) {
      result.success = true;
      break;
    }
  }
  result.final_state = state;
  if (recorded) {
    for (const auto& seq : constraints.forbidden_sequences(env_id)) {
      erase_memory(memory, SequenceSelector{env_id, seq});
    }
  }
  return result;
}

}  // namespace au::agent
