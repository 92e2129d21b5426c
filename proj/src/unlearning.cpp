#include "agent_unlearn/unlearning.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <set>

#include "agent_unlearn/error.hpp"
#include "agent_unlearn/rng.hpp"

namespace au::unlearn {
namespace {

using agent::EpisodeOptions;
using agent::TaskKind;
using agent::TaskSpec;

std::size_t nav_budget(const VerifyInputs& in) {
  return in.settings.nav_budget ? in.settings.nav_budget
                                : static_cast<std::size_t>(in.grid->area());
}

std::size_t collect_budget(const GridSpec& g, const EvalSettings& s) {
  return s.collect_budget ? s.collect_budget : 4 * static_cast<std::size_t>(g.area());
}

EpisodeResult rollout(const GridSpec& g, const BackendFactory& factory, MemoryStore& memory,
                      const ConstraintSet& constraints, std::size_t budget, TaskSpec task,
                      std::optional<Coord> start, std::uint64_t seed) {
  auto backend = factory(seed);
  EpisodeOptions opts;
  opts.task = task;
  opts.start = start;
  opts.record = false;
  return agent::run_episode(g, *backend, memory, constraints, budget, opts);
}

double mean_steps(const std::vector<EpisodeResult>& eps) {
  if (eps.empty()) return 0.0;
  double total = 0;
  for (const auto& e : eps) total += static_cast<double>(e.steps);
  return total / static_cast<double>(eps.size());
}

bool hits_target(const UnlearnRequest& r, const std::vector<Coord>& path) {
  if (r.scenario == Scenario::kState) {
    return std::any_of(path.begin(), path.end(), [&](Coord c) { return r.states.contains(c); });
  }
  if (r.scenario == Scenario::kTrajectory) return realizes_sequence(path, r.trajectory);
  return false;
}

bool within_band(double after, double before, double tol) {
  if (before == 0.0) return after == 0.0;
  return std::abs(after / before - 1.0) <= tol;
}

}  // namespace

BackendFactory scripted_factory() {
  return [](std::uint64_t seed) -> std::unique_ptr<PolicyBackend> {
    return std::make_unique<agent::ScriptedBackend>(seed);
  };
}

double Measurement::mean_collect_steps() const { return mean_steps(collect); }

double Measurement::mean_other_steps() const {
  std::vector<EpisodeResult> all;
  for (const auto& g : others) all.insert(all.end(), g.begin(), g.end());
  return mean_steps(all);
}

Measurement measure(const VerifyInputs& in, const MemoryStore& memory,
                    const ConstraintSet& constraints) {
  if (!in.grid) fail(ErrorCode::kInvalidArgument, "verification needs a target grid");
  if (in.settings.trials < 1) fail(ErrorCode::kInvalidArgument, "trials must be at least 1");
  const auto& s = in.settings;
  MemoryStore scratch = memory;
  Measurement m;
  for (std::size_t i = 0; i < in.eval_tasks.size(); ++i) {
    const NavTask& t = in.eval_tasks[i];
    for (std::size_t k = 0; k < s.trials; ++k) {
      m.nav.push_back(rollout(*in.grid, in.backend, scratch, constraints, nav_budget(in),
                              TaskSpec{TaskKind::kReach, t.goal}, t.start,
                              mix_seed(s.seed, i, k)));
    }
  }
  for (std::size_t k = 0; k < s.trials; ++k) {
    m.collect.push_back(rollout(*in.grid, in.backend, scratch, constraints,
                                collect_budget(*in.grid, s), TaskSpec{}, std::nullopt,
                                mix_seed(s.seed, 0xC011EC7ULL, k)));
  }
  for (std::size_t g = 0; g < in.others.size(); ++g) {
    const GridSpec& other = *in.others[g];
    std::vector<EpisodeResult> runs;
    for (std::size_t k = 0; k < s.trials; ++k) {
      runs.push_back(rollout(other, in.backend, scratch, constraints, collect_budget(other, s),
                             TaskSpec{}, std::nullopt, mix_seed(s.seed, 0x07E5ULL + g, k)));
    }
    m.others.push_back(std::move(runs));
  }
  return m;
}

nlohmann::json VerificationReport::to_json() const {
  nlohmann::json j;
  j["scenario"] = to_string(scenario);
  j["objective_met"] = objective_met;
  j["preservation_met"] = preservation_met;
  for (const auto& [k, v] : checks) j[k] = v;
  j["rollouts"] = rollouts;
  j["target_visits"] = target_visits;
  j["sequence_realizations"] = sequence_realizations;
  j["preserved_tasks"] = preserved_tasks;
  j["success_before"] = success_before;
  j["success_after"] = success_after;
  j["steps_before_target"] = steps_before_target;
  j["steps_after_target"] = steps_after_target;
  j["steps_before_other"] = steps_before_other;
  j["steps_after_other"] = steps_after_other;
  return j;
}

VerificationReport verify(const UnlearnRequest& request, const VerifyInputs& in,
                          const MemoryStore& memory, const ConstraintSet& constraints,
                          const Measurement& baseline, Measurement* after_out) {
  validate(request);
  if (in.eval_tasks.empty()) fail(ErrorCode::kInvalidArgument, "verification needs eval tasks");
  if (in.settings.trials < 1) fail(ErrorCode::kInvalidArgument, "trials must be at least 1");
  if (in.grid->env_id() != request.env_id) {
    fail(ErrorCode::kInvalidArgument, "request names " + request.env_id + " but the grid is " +
                                          in.grid->env_id());
  }
  Measurement local;
  Measurement& after = after_out ? *after_out : local;
  after = measure(in, memory, constraints);
  const auto& s = in.settings;

  VerificationReport r;
  r.scenario = request.scenario;
  r.rollouts = after.nav.size() + after.collect.size();
  for (const auto& g : after.others) r.rollouts += g.size();
  r.steps_before_target = baseline.mean_collect_steps();
  r.steps_after_target = after.mean_collect_steps();
  r.steps_before_other = baseline.mean_other_steps();
  r.steps_after_other = after.mean_other_steps();

  // Success on the tasks the target does not block, before and after.
  const DirectiveSet target = request_directives(request, s.sequence_mode);
  std::size_t ok_before = 0;
  std::size_t ok_after = 0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < in.eval_tasks.size(); ++i) {
    const NavTask& t = in.eval_tasks[i];
    const bool preserved = request.scenario == Scenario::kEnvironment ||
                           admissible_distance(*in.grid, t.start, t.goal, target).has_value();
    if (!preserved) continue;
    ++r.preserved_tasks;
    for (std::size_t k = 0; k < s.trials; ++k) {
      const std::size_t idx = i * s.trials + k;
      ok_before += baseline.nav.at(idx).success;
      ok_after += after.nav.at(idx).success;
      ++counted;
    }
  }
  if (counted > 0) {
    r.success_before = static_cast<double>(ok_before) / static_cast<double>(counted);
    r.success_after = static_cast<double>(ok_after) / static_cast<double>(counted);
  }
  const bool success_kept = r.success_after >= r.success_before - s.success_tolerance;

  std::vector<const EpisodeResult*> target_runs;
  for (const auto& e : after.nav) target_runs.push_back(&e);
  for (const auto& e : after.collect) target_runs.push_back(&e);

  switch (request.scenario) {
    case Scenario::kState: {
      for (const auto* e : target_runs) {
        for (const Coord& c : e->positions()) r.target_visits += request.states.contains(c);
      }
      r.checks["target_unvisited"] = r.target_visits == 0;
      r.checks["success_kept"] = success_kept;
      r.objective_met = r.checks["target_unvisited"];
      r.preservation_met = r.checks["success_kept"];
      break;
    }
    case Scenario::kTrajectory: {
      for (const auto* e : target_runs) {
        const auto path = e->positions();
        for (const auto& seq : target.forbid_sequences) {
          r.sequence_realizations += realizes_sequence(path, seq);
        }
      }
      r.checks["sequence_unrealized"] = r.sequence_realizations == 0;
      r.checks["success_kept"] = success_kept;
      r.objective_met = r.checks["sequence_unrealized"];
      r.preservation_met = r.checks["success_kept"];
      break;
    }
    case Scenario::kEnvironment: {
      r.checks["target_slower"] = r.steps_after_target > r.steps_before_target;
      r.checks["others_unchanged"] = in.others.empty() ||
                                 within_band(r.steps_after_other, r.steps_before_other, s.step_tolerance);
      r.objective_met = r.checks["target_slower"];
      r.preservation_met = r.checks["others_unchanged"];
      break;
    }
  }
  return r;
}

VerificationReport verify(const UnlearnRequest& request, const VerifyInputs& in,
                          const MemoryStore& memory, const ConstraintSet& before,
                          const ConstraintSet& after) {
  if (in.eval_tasks.empty()) fail(ErrorCode::kInvalidArgument, "verification needs eval tasks");
  return verify(request, in, memory, after, measure(in, memory, before));
}

void check_consistency(const UnlearnRequest& request, const UnlearnPrompt& prompt,
                       SequenceMode mode) {
  const DirectiveSet& p = prompt.parsed;
  const auto mismatch = [&](const std::string& why) {
    fail(ErrorCode::kConsistency, "prompt from template '" + prompt.template_id + "' does not fit the " +
                                      to_string(request.scenario) + " request: " + why);
  };
  if (p.empty()) mismatch("no directives");
  const DirectiveSet full = request_directives(request, mode);
  switch (request.scenario) {
    case Scenario::kState:
      if (p.avoid_states.empty()) mismatch("no AVOID-STATE directive");
      if (!p.forbid_sequences.empty() || !p.forget_envs.empty()) mismatch("foreign directives");
      for (const Coord& c : p.avoid_states) {
        if (!full.avoid_states.contains(c)) mismatch("avoids " + env::to_string(c));
      }
      break;
    case Scenario::kTrajectory:
      if (p.forbid_sequences.empty()) mismatch("no FORBID-SEQUENCE directive");
      if (!p.avoid_states.empty() || !p.forget_envs.empty()) mismatch("foreign directives");
      for (const auto& seq : p.forbid_sequences) {
        if (std::find(full.forbid_sequences.begin(), full.forbid_sequences.end(), seq) ==
            full.forbid_sequences.end()) {
          mismatch("forbids a sequence the request does not name");
        }
      }
      break;
    case Scenario::kEnvironment:
      if (p.forget_envs != full.forget_envs) mismatch("FORGET-ENV does not name " + request.env_id);
      if (!p.avoid_states.empty() || !p.forbid_sequences.empty()) mismatch("foreign directives");
      break;
  }
}

VerificationReport execute_unlearning(const UnlearnRequest& request, const UnlearnPrompt& prompt,
                                      MemoryStore& memory, ConstraintSet& constraints,
                                      const VerifyInputs& in, const Measurement& baseline,
                                      Measurement* after) {
  validate(request);
  check_consistency(request, prompt, in.settings.sequence_mode);
  switch (request.scenario) {
    case Scenario::kState:
      agent::erase_memory(memory, agent::StateSelector{request.env_id, request.states});
      break;
    case Scenario::kTrajectory:
      for (const auto& seq : request_directives(request, in.settings.sequence_mode).forbid_sequences) {
        agent::erase_memory(memory, agent::SequenceSelector{request.env_id, seq});
      }
      break;
    case Scenario::kEnvironment:
      agent::erase_memory(memory, agent::EnvSelector{request.env_id});
      break;
  }
  constraints.merge(request.env_id, prompt.parsed);
  return verify(request, in, memory, constraints, baseline, after);
}

std::optional<std::size_t> admissible_distance(const GridSpec& spec, Coord from, Coord to,
                                               const DirectiveSet& directives) {
  if (!spec.is_free(from) || !spec.in_bounds(to)) return std::nullopt;
  std::vector<SequenceMatcher> matchers;
  std::size_t product = 1;
  for (const auto& seq : directives.forbid_sequences) {
    matchers.emplace_back(seq);
    product *= seq.size();
  }
  const auto encode = [&](Coord c, const std::vector<std::size_t>& ks) {
    std::size_t code = 0;
    for (std::size_t i = ks.size(); i-- > 0;) code = code * matchers[i].size() + ks[i];
    return static_cast<std::size_t>(c.row * spec.width() + c.col) * product + code;
  };
  std::vector<std::size_t> ks0;
  for (const auto& m : matchers) ks0.push_back(m.run({from}));
  if (from == to) return 0;

  struct Item {
    Coord cell;
    std::vector<std::size_t> ks;
    std::size_t dist;
  };
  std::vector<bool> seen(static_cast<std::size_t>(spec.area()) * product, false);
  seen[encode(from, ks0)] = true;
  std::deque<Item> queue{{from, ks0, 0}};
  while (!queue.empty()) {
    Item cur = std::move(queue.front());
    queue.pop_front();
    for (env::Action a : env::kActions) {
      const Coord next = env::apply(cur.cell, a);
      if (!spec.is_free(next) || directives.avoid_states.contains(next)) continue;
      std::vector<std::size_t> ks(cur.ks.size());
      bool completes = false;
      for (std::size_t i = 0; i < ks.size() && !completes; ++i) {
        ks[i] = matchers[i].advance(cur.ks[i], next);
        completes = ks[i] == matchers[i].size();
      }
      if (completes) continue;
      const std::size_t code = encode(next, ks);
      if (seen[code]) continue;
      seen[code] = true;
      if (next == to) return cur.dist + 1;
      queue.push_back(Item{next, std::move(ks), cur.dist + 1});
    }
  }
  return std::nullopt;
}

std::vector<NavTask> make_eval_tasks(const UnlearnRequest& request, const GridSpec& spec,
                                     std::size_t n, std::uint64_t seed) {
  validate(request);
  Rng rng(seed);
  std::vector<Coord> cells;
  for (const Coord& c : spec.free_cells()) {
    if (!request.states.contains(c)) cells.push_back(c);
  }
  if (cells.size() < 2) fail(ErrorCode::kInvalidArgument, "grid too small for eval tasks");
  const auto draw = [&] {
    NavTask t{cells[rng.uniform_index(cells.size())], cells[rng.uniform_index(cells.size())]};
    while (t.goal == t.start) t.goal = cells[rng.uniform_index(cells.size())];
    return t;
  };

  std::vector<NavTask> tasks;
  if (request.scenario != Scenario::kEnvironment) {
    const std::size_t wanted = n / 2;
    for (std::size_t tries = 0; tasks.size() < wanted && tries < 200 * n; ++tries) {
      const NavTask t = draw();
      const auto path = env::bfs_oracle(spec, t.start, t.goal);
      if (path && hits_target(request, *path)) tasks.push_back(t);
    }
  }
  while (tasks.size() < n) tasks.push_back(draw());
  return tasks;
}

std::set<Coord> pick_states(const GridSpec& spec, const std::vector<Coord>& route,
                            std::size_t count, std::uint64_t seed) {
  std::vector<Coord> candidates;
  for (const Coord& c : route) {
    if (c == spec.start()) continue;
    if (std::find(spec.treasures().begin(), spec.treasures().end(), c) != spec.treasures().end()) {
      continue;
    }
    if (std::find(candidates.begin(), candidates.end(), c) == candidates.end()) {
      candidates.push_back(c);
    }
  }
  Rng rng(seed);
  for (std::size_t i = candidates.size(); i > 1; --i) {
    std::swap(candidates[i - 1], candidates[rng.uniform_index(i)]);
  }
  std::set<Coord> chosen;
  for (const Coord& c : candidates) {
    if (chosen.size() == count) break;
    std::set<Coord> trial = chosen;
    trial.insert(c);
    const bool reachable = std::all_of(spec.treasures().begin(), spec.treasures().end(),
                                       [&](Coord t) {
                                         return env::bfs_oracle(spec, spec.start(), t, trial)
                                             .has_value();
                                       });
    if (reachable) chosen = std::move(trial);
  }
  if (chosen.size() < count) {
    fail(ErrorCode::kAttackSetup, "no usable target: route offers " +
                                      std::to_string(chosen.size()) + " removable cells");
  }
  return chosen;
}

std::vector<Coord> pick_sequence(const GridSpec& spec, const std::vector<Coord>& route,
                                 std::size_t length, std::uint64_t seed) {
  if (length < 2) fail(ErrorCode::kInvalidArgument, "sequence length must be at least 2");
  if (route.size() < length + 1) {
    fail(ErrorCode::kAttackSetup, "no usable target: route shorter than the sequence");
  }
  // Leg boundaries: the start and every first arrival on a treasure.
  std::vector<bool> boundary(route.size(), false);
  boundary[0] = true;
  std::set<Coord> picked;
  std::size_t last_pickup = 0;
  for (std::size_t i = 1; i < route.size(); ++i) {
    if (spec.at(route[i]) == env::CellKind::kTreasure && picked.insert(route[i]).second) {
      boundary[i] = true;
      last_pickup = i;
    }
  }
  // A run must sit strictly inside one leg and never revisit a cell; across
  // a pickup the agent changes goal, and no single planned route walks it.
  std::vector<std::size_t> starts;
  for (std::size_t first = 1; first + length <= last_pickup; ++first) {
    bool ok = true;
    std::set<Coord> cells;
    for (std::size_t i = first; i < first + length && ok; ++i) {
      ok = !boundary[i] && cells.insert(route[i]).second;
    }
    if (ok) starts.push_back(first);
  }
  if (starts.empty()) fail(ErrorCode::kAttackSetup, "no usable target: no run fits inside a leg of the route");
  Rng rng(seed);
  const std::size_t first = starts[rng.uniform_index(starts.size())];
  return {route.begin() + static_cast<std::ptrdiff_t>(first),
          route.begin() + static_cast<std::ptrdiff_t>(first + length)};
}

}  // namespace au::unlearn
