#include "agent_unlearn/adversary.hpp"

#include <algorithm>
#include <cmath>

#include "agent_unlearn/error.hpp"
#include "agent_unlearn/rng.hpp"

namespace au::adversary {
namespace {

using agent::EpisodeOptions;
using agent::EpisodeResult;
using agent::TaskKind;
using agent::TaskSpec;
using unlearn::Scenario;

std::size_t task_budget(const GridSpec& spec, std::size_t budget) {
  return budget ? budget : static_cast<std::size_t>(spec.area());
}

EpisodeResult rollout(const GridSpec& spec, const Agent& agent, agent::MemoryStore& scratch,
                      const NavTask& task, std::size_t budget, std::uint64_t seed) {
  if (!agent.backend) fail(ErrorCode::kInvalidArgument, "agent has no backend");
  auto backend = agent.backend(seed);
  EpisodeOptions opts;
  opts.task = TaskSpec{TaskKind::kReach, task.goal};
  opts.start = task.start;
  opts.record = false;
  return agent::run_episode(spec, *backend, scratch, agent.constraints, budget, opts);
}

bool hits(const UnlearnRequest& target, const std::vector<Coord>& path) {
  if (target.scenario == Scenario::kState) {
    return std::any_of(path.begin(), path.end(), [&](Coord c) { return target.states.contains(c); });
  }
  return realizes_sequence(path, target.trajectory);
}

std::set<Coord> target_cells(const UnlearnRequest& target) {
  if (target.scenario == Scenario::kState) return target.states;
  return {target.trajectory.begin(), target.trajectory.end()};
}

}  // namespace

void AttackConfig::validate() const {
  if (n_pairs < 1) fail(ErrorCode::kInvalidArgument, "attack needs at least one start-goal pair");
  if (trials_per_pair < 1) fail(ErrorCode::kInvalidArgument, "attack needs at least one trial per pair");
  if (!(margin >= 0 && margin < 1)) fail(ErrorCode::kInvalidArgument, "attack margin must be in [0, 1)");
}

std::string describe_target(const UnlearnRequest& target) {
  std::string out = unlearn::to_string(target.scenario) + ":" + target.env_id;
  const auto join = [&](const auto& cells) {
    std::string s;
    for (const Coord& c : cells) s += (s.empty() ? "" : " ") + env::to_string(c);
    return s;
  };
  if (target.scenario == Scenario::kState) out += ":" + join(target.states);
  if (target.scenario == Scenario::kTrajectory) out += ":" + join(target.trajectory);
  return out;
}

std::vector<NavTask> attack_tasks(const UnlearnRequest& target, const GridSpec& spec,
                                  std::size_t n_pairs, std::uint64_t seed,
                                  std::optional<Coord> fixed_start) {
  unlearn::validate(target);
  if (target.scenario == Scenario::kEnvironment) {
    fail(ErrorCode::kAttackSetup, "membership inference needs a state or trajectory target");
  }
  if (n_pairs < 1) fail(ErrorCode::kInvalidArgument, "attack needs at least one start-goal pair");
  const std::set<Coord> cells = target_cells(target);
  for (const Coord& c : cells) {
    if (!spec.is_free(c)) {
      fail(ErrorCode::kAttackSetup, "target cell " + env::to_string(c) + " is not a free cell");
    }
  }
  const Coord entry = target.scenario == Scenario::kState ? *cells.begin() : target.trajectory.front();
  if (!env::bfs_oracle(spec, spec.start(), entry)) {
    fail(ErrorCode::kAttackSetup, "target " + env::to_string(entry) + " is unreachable from the start");
  }
  if (fixed_start && !spec.is_free(*fixed_start)) {
    fail(ErrorCode::kAttackSetup, "fixed start " + env::to_string(*fixed_start) + " is not free");
  }

  std::vector<Coord> endpoints;
  for (const Coord& c : spec.free_cells()) {
    if (!cells.contains(c)) endpoints.push_back(c);
  }
  if (endpoints.size() < 2) fail(ErrorCode::kAttackSetup, "no room for attack endpoints");

  // A task counts when the shortest route the agent would plan, the
  // lexicographically smallest one, walks through the target. Candidate
  // pairs are scanned in a seeded random order, so a task is found whenever
  // one exists.
  std::vector<NavTask> candidates;
  for (const Coord& s : fixed_start ? std::vector<Coord>{*fixed_start} : endpoints) {
    for (const Coord& g : endpoints) {
      if (s != g) candidates.push_back({s, g});
    }
  }
  Rng rng(seed);
  for (std::size_t i = candidates.size(); i > 1; --i) {
    std::swap(candidates[i - 1], candidates[rng.uniform_index(i)]);
  }
  std::vector<NavTask> tasks;
  for (const NavTask& t : candidates) {
    if (tasks.size() == n_pairs) break;
    const auto path = env::bfs_oracle(spec, t.start, t.goal);
    if (path && hits(target, *path)) tasks.push_back(t);
  }
  if (tasks.empty()) {
    fail(ErrorCode::kAttackSetup, "no start-goal pair must pass through " + describe_target(target));
  }
  return tasks;
}

double traversal_probability(const UnlearnRequest& target, const GridSpec& spec, const Agent& agent,
                             const std::vector<NavTask>& tasks, const AttackConfig& config) {
  config.validate();
  if (tasks.empty()) fail(ErrorCode::kInvalidArgument, "no attack tasks");
  agent::MemoryStore scratch = agent.memory;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    for (std::size_t k = 0; k < config.trials_per_pair; ++k) {
      const auto ep = rollout(spec, agent, scratch, tasks[i], task_budget(spec, config.budget),
                              mix_seed(config.seed, i, k));
      hit += hits(target, ep.positions());
    }
  }
  return static_cast<double>(hit) / static_cast<double>(tasks.size() * config.trials_per_pair);
}

InferenceVerdict inference_attack(const UnlearnRequest& target, const GridSpec& spec,
                                  const Agent& under_test, const Agent& reference,
                                  const AttackConfig& config, std::optional<Coord> fixed_start) {
  config.validate();
  InferenceVerdict v;
  v.margin = config.margin;
  v.tasks = attack_tasks(target, spec, config.n_pairs, config.seed, fixed_start);
  v.traversal_prob = traversal_probability(target, spec, under_test, v.tasks, config);
  v.reference_prob = traversal_probability(target, spec, reference, v.tasks, config);
  v.distinguishable = std::abs(v.traversal_prob - v.reference_prob) > config.margin;
  return v;
}

std::string ReconstructionResult::to_text() const {
  std::string out;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      switch (at({r, c})) {
        case CellGuess::kFree: out += '.'; break;
        case CellGuess::kObstacle: out += '#'; break;
        case CellGuess::kUnknown: out += '?'; break;
      }
    }
    out += '\n';
  }
  return out;
}

ReconstructionResult classify_observations(const GridSpec& spec,
                                           const std::vector<EpisodeResult>& observed) {
  ReconstructionResult r;
  r.width = spec.width();
  r.height = spec.height();
  r.inferred.assign(static_cast<std::size_t>(spec.area()), CellGuess::kUnknown);
  const auto mark = [&](Coord c, CellGuess g) {
    auto& slot = r.inferred[static_cast<std::size_t>(c.row * r.width + c.col)];
    if (slot == CellGuess::kFree) return;
    slot = g;
  };
  for (const auto& ep : observed) {
    const auto& pairs = ep.trajectory.pairs;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Coord here = pairs[i].first.position;
      const Coord next = i + 1 < pairs.size() ? pairs[i + 1].first.position : ep.final_state.position;
      mark(here, CellGuess::kFree);
      const Coord tried = env::apply(here, pairs[i].second);
      if (next == here && spec.in_bounds(tried)) mark(tried, CellGuess::kObstacle);
    }
    mark(ep.final_state.position, CellGuess::kFree);
  }
  std::size_t correct = 0;
  for (int row = 0; row < r.height; ++row) {
    for (int col = 0; col < r.width; ++col) {
      const CellGuess truth = spec.is_obstacle({row, col}) ? CellGuess::kObstacle : CellGuess::kFree;
      correct += r.at({row, col}) == truth;
    }
  }
  r.success_rate = static_cast<double>(correct) / static_cast<double>(spec.area());
  return r;
}

ReconstructionResult reconstruct_environment(const GridSpec& spec, const Agent& agent,
                                             std::size_t exploration_budget, std::uint64_t seed) {
  if (exploration_budget < static_cast<std::size_t>(spec.area())) {
    fail(ErrorCode::kInvalidArgument, "exploration budget " + std::to_string(exploration_budget) +
                                          " is below the grid area " + std::to_string(spec.area()));
  }
  // Quadrant order: top-left, top-right, bottom-left, bottom-right.
  const int mid_r = spec.height() / 2;
  const int mid_c = spec.width() / 2;
  std::vector<Coord> goals;
  for (int q = 0; q < 4; ++q) {
    const int r0 = q < 2 ? 0 : mid_r;
    const int r1 = q < 2 ? mid_r : spec.height();
    const int c0 = q % 2 == 0 ? 0 : mid_c;
    const int c1 = q % 2 == 0 ? mid_c : spec.width();
    for (int r = r0; r < r1; ++r) {
      for (int c = c0; c < c1; ++c) goals.push_back({r, c});
    }
  }

  const std::size_t cap = 2 * static_cast<std::size_t>(spec.width() + spec.height());
  agent::MemoryStore scratch = agent.memory;
  std::vector<EpisodeResult> observed;
  Coord here = spec.start();
  std::size_t used = 0;
  ReconstructionResult partial = classify_observations(spec, observed);
  for (std::size_t i = 0; i < goals.size() && used < exploration_budget; ++i) {
    if (partial.at(goals[i]) != CellGuess::kUnknown || goals[i] == here) continue;
    const std::size_t budget = std::min(cap, exploration_budget - used);
    auto ep = rollout(spec, agent, scratch, NavTask{here, goals[i]}, budget, mix_seed(seed, i));
    used += ep.steps;
    here = ep.final_state.position;
    observed.push_back(std::move(ep));
    partial = classify_observations(spec, observed);
  }
  if (observed.empty()) {
    EpisodeResult still;
    still.final_state.position = here;
    observed.push_back(still);
  }
  ReconstructionResult out = classify_observations(spec, observed);
  out.steps_used = used;
  return out;
}

std::array<double, 4> laplace(const ActionCounts& counts) {
  double total = 4.0;
  for (auto c : counts) total += static_cast<double>(c);
  std::array<double, 4> p{};
  for (std::size_t i = 0; i < 4; ++i) p[i] = (static_cast<double>(counts[i]) + 1.0) / total;
  return p;
}

double kl_divergence(const std::array<double, 4>& p, const std::array<double, 4>& q) {
  double kl = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    if (p[i] == 0) continue;
    if (q[i] == 0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(0.0, kl);
}

BehaviorCounts behavior_counts(const GridSpec& spec, const Agent& agent,
                               const std::vector<NavTask>& tasks, std::size_t trials,
                               std::uint64_t seed, std::size_t budget) {
  if (trials < 1) fail(ErrorCode::kInvalidArgument, "need at least one trial per task");
  agent::MemoryStore scratch = agent.memory;
  BehaviorCounts counts;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    for (std::size_t k = 0; k < trials; ++k) {
      const auto ep = rollout(spec, agent, scratch, tasks[i], task_budget(spec, budget),
                              mix_seed(seed, i, k));
      for (const auto& [state, action] : ep.trajectory.pairs) {
        ++counts[{tasks[i].goal, state.position}][static_cast<std::size_t>(action)];
      }
    }
  }
  return counts;
}

KlResult estimate_kl(const BehaviorCounts& un, const BehaviorCounts& ref) {
  KlResult r;
  double total = 0;
  for (const auto& [key, counts] : un) {
    const auto it = ref.find(key);
    if (it == ref.end()) continue;
    total += kl_divergence(laplace(counts), laplace(it->second));
    ++r.shared_states;
  }
  if (r.shared_states == 0) fail(ErrorCode::kEstimation, "the two agents share no visited state");
  r.kl = total / static_cast<double>(r.shared_states);
  return r;
}

KlResult behavior_kl(const Agent& un, const Agent& ref, const GridSpec& spec,
                     const std::vector<NavTask>& tasks, std::size_t trials, std::uint64_t seed,
                     std::optional<double> l_lip, std::optional<double> eps_reward) {
  KlResult r = estimate_kl(behavior_counts(spec, un, tasks, trials, seed),
                           behavior_counts(spec, ref, tasks, trials, seed));
  if (l_lip && eps_reward) r.bound = *l_lip * *eps_reward;
  return r;
}

nlohmann::json AttackReport::to_json() const {
  const auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  nlohmann::json j{{"target", target},
                   {"pre_traversal_prob", opt(pre_traversal_prob)},
                   {"traversal_prob", opt(traversal_prob)},
                   {"reference_prob", opt(reference_prob)},
                   {"distinguishable", distinguishable},
                   {"reconstruction_success_rate", opt(reconstruction_success_rate)},
                   {"reconstruction_before", opt(reconstruction_before)},
                   {"reconstruction_reference", opt(reconstruction_reference)},
                   {"kl_estimate", opt(kl_estimate)},
                   {"kl_bound", opt(kl_bound)},
                   {"shared_states", shared_states}};
  if (!error.empty()) j["error"] = error;
  return j;
}

}  // namespace au::adversary
