#include <algorithm>
#include <climits>
#include <cstdlib>
#include <deque>

#include "agent_unlearn/error.hpp"
#include "agent_unlearn/policy.hpp"

namespace au::agent {
namespace {

constexpr std::size_t kMaxProductStates = std::size_t{1} << 22;

struct Planner {
  const GridSpec& spec;
  const std::set<Coord>& avoid;
  std::vector<SequenceMatcher> matchers;
  std::vector<std::size_t> radix;  // automaton states per matcher: 0..size-1
  std::size_t product = 1;

  Planner(const GridSpec& s, const DirectiveSet& d) : spec(s), avoid(d.avoid_states) {
    for (const auto& seq : d.forbid_sequences) {
      matchers.emplace_back(seq);
      radix.push_back(seq.size());
      product *= seq.size();
      if (product * static_cast<std::size_t>(spec.area()) > kMaxProductStates) {
        fail(ErrorCode::kCapacity, "forbidden sequences too long to plan around");
      }
    }
  }

  std::size_t encode(Coord c, const std::vector<std::size_t>& ks) const {
    std::size_t code = 0;
    for (std::size_t i = ks.size(); i-- > 0;) code = code * radix[i] + ks[i];
    return static_cast<std::size_t>(c.row * spec.width() + c.col) * product + code;
  }

  // Automaton states after stepping onto `next`; nullopt if that completes a
  // forbidden sequence.
  std::optional<std::vector<std::size_t>> transition(const std::vector<std::size_t>& ks,
                                                     Coord next) const {
    std::vector<std::size_t> out(ks.size());
    for (std::size_t i = 0; i < ks.size(); ++i) {
      out[i] = matchers[i].advance(ks[i], next);
      if (out[i] == matchers[i].size()) return std::nullopt;
    }
    return out;
  }

  bool enterable(Coord from, Coord next) const {
    return spec.is_free(next) && (next == from || !avoid.contains(next));
  }
};

struct Node {
  Coord cell;
  std::vector<std::size_t> ks;
  Action first;
};

int manhattan(Coord a, Coord b) { return std::abs(a.row - b.row) + std::abs(a.col - b.col); }

}  // namespace

std::string ScriptedBackend::identity() const {
  return "scripted(seed=" + std::to_string(seed_) + ")";
}

Action ScriptedBackend::decide(const PromptContext& prompt, const GridSpec& spec) {
  return scripted_decide(prompt, spec, stream_);
}

Action scripted_decide(const PromptContext& prompt, const GridSpec& spec, Rng& stream) {
  const ObservedState obs = parse_state(prompt.state_rendering);
  if (obs.env_id != spec.env_id()) {
    fail(ErrorCode::kInvalidArgument,
         "prompt describes env '" + obs.env_id + "' but the grid is '" + spec.env_id() + "'");
  }
  check_state(spec, obs.state);
  const DirectiveSet directives = parse_directives(prompt.directives);
  if (directives.forget_envs.contains(obs.env_id)) {
    return env::kActions[stream.uniform_index(env::kActions.size())];
  }

  const TaskSpec task = parse_task(prompt.task_text);
  std::vector<Coord> targets;
  if (task.kind == TaskKind::kReach) {
    if (!spec.in_bounds(task.goal)) {
      fail(ErrorCode::kInvalidArgument, "goal " + env::to_string(task.goal) + " is off the grid");
    }
    targets.push_back(task.goal);
  } else {
    for (const Coord& t : spec.treasures()) {
      if (!obs.state.collected.contains(t)) targets.push_back(t);
    }
  }
  if (targets.empty()) return Action::kUp;
  const auto is_target = [&](Coord c) {
    return std::find(targets.begin(), targets.end(), c) != targets.end();
  };

  const Planner planner(spec, directives);
  const Coord here = obs.state.position;
  std::vector<Coord> history = obs.trail;
  if (history.empty() || history.back() != here) history.push_back(here);
  std::vector<std::size_t> start_ks;
  for (const auto& m : planner.matchers) start_ks.push_back(m.run(history));

  // Breadth-first search in direction order; the first target discovered is
  // the nearest one and its path is the lexicographically smallest.
  std::vector<bool> seen(static_cast<std::size_t>(spec.area()) * planner.product, false);
  seen[planner.encode(here, start_ks)] = true;
  std::deque<Node> queue;
  queue.push_back(Node{here, start_ks, Action::kUp});
  bool root = true;
  while (!queue.empty()) {
    Node cur = std::move(queue.front());
    queue.pop_front();
    for (Action a : env::kActions) {
      const Coord next = env::apply(cur.cell, a);
      const Action first = root ? a : cur.first;
      if (task.kind == TaskKind::kReach && next == task.goal && spec.in_bounds(next) &&
          spec.is_obstacle(next)) {
        // Walking into an obstacle goal is how a reach task on a wall ends.
        return first;
      }
      if (!planner.enterable(cur.cell, next) || next == cur.cell) continue;
      auto ks = planner.transition(cur.ks, next);
      if (!ks) continue;
      const std::size_t code = planner.encode(next, *ks);
      if (seen[code]) continue;
      seen[code] = true;
      if (is_target(next)) return first;
      queue.push_back(Node{next, std::move(*ks), first});
    }
    root = false;
  }

  // No admissible route: greedy step toward the nearest target among moves
  // that break no directive.
  std::optional<Action> best;
  int best_distance = INT_MAX;
  for (Action a : env::kActions) {
    const Coord next = env::apply(here, a);
    if (!planner.enterable(here, next) || next == here) continue;
    if (!planner.transition(start_ks, next)) continue;
    int d = INT_MAX;
    for (const Coord& t : targets) d = std::min(d, manhattan(next, t));
    if (d < best_distance) {
      best_distance = d;
      best = a;
    }
  }
  if (best) return *best;
  // Boxed in: prefer a move that leaves the position unchanged.
  for (Action a : env::kActions) {
    const Coord next = env::apply(here, a);
    if (!spec.is_free(next) && planner.transition(start_ks, here)) return a;
  }
  return Action::kUp;
}

}  // namespace au::agent
