#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agent_unlearn/constraints.hpp"
#include "agent_unlearn/episode.hpp"
#include "agent_unlearn/gridworld.hpp"
#include "agent_unlearn/memory.hpp"
#include "agent_unlearn/policy.hpp"
#include "agent_unlearn/templates.hpp"

namespace au::unlearn {

using agent::EpisodeResult;
using agent::MemoryStore;
using agent::PolicyBackend;
using env::GridSpec;

// Builds a fresh backend for one rollout. Scripted backends use the seed for
// their random walk; remote backends ignore it.
using BackendFactory = std::function<std::unique_ptr<PolicyBackend>(std::uint64_t seed)>;

BackendFactory scripted_factory();

struct NavTask {
  Coord start;
  Coord goal;

  friend auto operator<=>(const NavTask&, const NavTask&) = default;
};

struct EvalSettings {
  std::size_t trials = 3;
  std::size_t nav_budget = 0;      // 0: grid area
  std::size_t collect_budget = 0;  // 0: four times the grid area
  double step_tolerance = 0.05;    // relative band for other environments
  double success_tolerance = 0.0;  // allowed drop in success rate
  SequenceMode sequence_mode = SequenceMode::kFullSequence;
  std::uint64_t seed = 0;
};

// What verification needs besides the agent itself.
struct VerifyInputs {
  const GridSpec* grid = nullptr;          // the environment the request names
  std::vector<const GridSpec*> others;     // environments that must be unaffected
  BackendFactory backend;
  std::vector<NavTask> eval_tasks;
  EvalSettings settings;
};

// Rollouts of one agent configuration.
struct Measurement {
  std::vector<EpisodeResult> nav;      // eval task i, trial t at i * trials + t
  std::vector<EpisodeResult> collect;  // one per trial on the target grid
  std::vector<std::vector<EpisodeResult>> others;  // per other grid, one per trial

  double mean_collect_steps() const;
  double mean_other_steps() const;
};

Measurement measure(const VerifyInputs& in, const MemoryStore& memory,
                    const ConstraintSet& constraints);

struct VerificationReport {
  Scenario scenario = Scenario::kState;
  bool objective_met = false;
  bool preservation_met = false;
  std::map<std::string, bool> checks;  // "target_unvisited", "success_kept", ...

  std::size_t rollouts = 0;
  std::size_t target_visits = 0;         // state scenario
  std::size_t sequence_realizations = 0; // trajectory scenario
  std::size_t preserved_tasks = 0;       // tasks solvable without the target
  double success_before = 0.0;
  double success_after = 0.0;
  double steps_before_target = 0.0;
  double steps_after_target = 0.0;
  double steps_before_other = 0.0;
  double steps_after_other = 0.0;

  nlohmann::json to_json() const;
};

// Checks the scenario's objective and preservation predicates by comparing
// rollouts under `constraints` against the `baseline` measurement. Throws
// kInvalidArgument when there are no eval tasks or trials is zero. The new
// rollouts go to `after` when it is given.
VerificationReport verify(const UnlearnRequest& request, const VerifyInputs& in,
                          const MemoryStore& memory, const ConstraintSet& constraints,
                          const Measurement& baseline, Measurement* after = nullptr);

// Same, measuring the baseline under `before` first.
VerificationReport verify(const UnlearnRequest& request, const VerifyInputs& in,
                          const MemoryStore& memory, const ConstraintSet& before,
                          const ConstraintSet& after);

// Throws kConsistency unless the prompt's directives are nonempty, all of
// the request's kind, and all about the request's target.
void check_consistency(const UnlearnRequest& request, const UnlearnPrompt& prompt,
                       SequenceMode mode);

// Erases the matching memory, merges the prompt's directives into the
// constraints and verifies the outcome.
VerificationReport execute_unlearning(const UnlearnRequest& request, const UnlearnPrompt& prompt,
                                      MemoryStore& memory, ConstraintSet& constraints,
                                      const VerifyInputs& in, const Measurement& baseline,
                                      Measurement* after = nullptr);

// Length of the shortest route from `from` to `to` that obeys `directives`
// (avoided cells, forbidden sequences), or nullopt.
std::optional<std::size_t> admissible_distance(const GridSpec& spec, Coord from, Coord to,
                                               const DirectiveSet& directives);

// Half the tasks route through the target on their unconstrained shortest
// path; the rest are random pairs. Endpoints never sit on an avoided cell.
// Environment requests get random pairs only.
std::vector<NavTask> make_eval_tasks(const UnlearnRequest& request, const GridSpec& spec,
                                     std::size_t n, std::uint64_t seed);

// Target selection from the agent's own pre-unlearning collect route.
// States: `count` cells on the route, never the start or a treasure, whose
// removal keeps every treasure reachable. Trajectory: a contiguous run of
// `length` distinct cells strictly inside one leg of the route, a leg being
// the stretch from the start or a treasure pickup to the next pickup. Throws
// kAttackSetup ("no usable target") when the route offers none.
std::set<Coord> pick_states(const GridSpec& spec, const std::vector<Coord>& route,
                            std::size_t count, std::uint64_t seed);
std::vector<Coord> pick_sequence(const GridSpec& spec, const std::vector<Coord>& route,
                                 std::size_t length, std::uint64_t seed);

}  // namespace au::unlearn
