#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agent_unlearn/constraints.hpp"
#include "agent_unlearn/memory.hpp"
#include "agent_unlearn/unlearning.hpp"

namespace au::adversary {

using env::Coord;
using env::GridSpec;
using unlearn::BackendFactory;
using unlearn::NavTask;
using unlearn::UnlearnRequest;

// An agent as the adversary sees it: something that can be given tasks.
struct Agent {
  BackendFactory backend;
  ConstraintSet constraints;
  agent::MemoryStore memory;
  std::string label;
};

struct AttackConfig {
  std::size_t n_pairs = 10;
  std::size_t trials_per_pair = 10;
  std::uint64_t seed = 0;
  double margin = 0.05;
  std::size_t budget = 0;  // per task; 0: grid area

  void validate() const;
};

// Tasks whose unconstrained planned route (the lexicographically smallest
// shortest path) visits the target cell or walks the target sequence. Endpoints avoid
// target cells unless `fixed_start` pins the start. Throws kAttackSetup when
// the target is not reachable or no such task turns up.
std::vector<NavTask> attack_tasks(const UnlearnRequest& target, const GridSpec& spec,
                                  std::size_t n_pairs, std::uint64_t seed,
                                  std::optional<Coord> fixed_start = std::nullopt);

// Fraction of rollouts over `tasks` x trials that visit / realize the target.
double traversal_probability(const UnlearnRequest& target, const GridSpec& spec, const Agent& agent,
                             const std::vector<NavTask>& tasks, const AttackConfig& config);

struct InferenceVerdict {
  double traversal_prob = 0.0;
  double reference_prob = 0.0;
  bool distinguishable = false;
  double margin = 0.05;
  std::vector<NavTask> tasks;
};

InferenceVerdict inference_attack(const UnlearnRequest& target, const GridSpec& spec,
                                  const Agent& under_test, const Agent& reference,
                                  const AttackConfig& config,
                                  std::optional<Coord> fixed_start = std::nullopt);

enum class CellGuess : std::uint8_t { kUnknown, kFree, kObstacle };

struct ReconstructionResult {
  int width = 0;
  int height = 0;
  std::vector<CellGuess> inferred;  // row-major
  double success_rate = 0.0;
  std::size_t steps_used = 0;

  CellGuess at(Coord c) const { return inferred[static_cast<std::size_t>(c.row * width + c.col)]; }
  std::string to_text() const;  // '.', '#', '?'
};

// Classifies cells from observed trajectories: visited cells are free, cells
// an agent tried and failed to enter are obstacles, the rest unknown.
ReconstructionResult classify_observations(const GridSpec& spec,
                                           const std::vector<agent::EpisodeResult>& observed);

// Sends the agent to every cell, quadrant by quadrant, from wherever it
// stands, until the exploration budget is spent. Throws kInvalidArgument when
// the budget is below the grid area.
ReconstructionResult reconstruct_environment(const GridSpec& spec, const Agent& agent,
                                             std::size_t exploration_budget, std::uint64_t seed);

using ActionCounts = std::array<std::size_t, 4>;

// Smoothed action distribution, pseudo-count 1 per action.
std::array<double, 4> laplace(const ActionCounts& counts);
double kl_divergence(const std::array<double, 4>& p, const std::array<double, 4>& q);

struct KlResult {
  double kl = 0.0;
  std::size_t shared_states = 0;
  std::optional<double> bound;  // L_lip * eps_reward when both are supplied
};

// State key: task goal and position.
using StateKey = std::pair<Coord, Coord>;
using BehaviorCounts = std::map<StateKey, ActionCounts>;

BehaviorCounts behavior_counts(const GridSpec& spec, const Agent& agent,
                               const std::vector<NavTask>& tasks, std::size_t trials,
                               std::uint64_t seed, std::size_t budget = 0);

// Mean KL over states seen by both. Throws kEstimation when none are shared.
KlResult estimate_kl(const BehaviorCounts& un, const BehaviorCounts& ref);

KlResult behavior_kl(const Agent& un, const Agent& ref, const GridSpec& spec,
                     const std::vector<NavTask>& tasks, std::size_t trials, std::uint64_t seed,
                     std::optional<double> l_lip = std::nullopt,
                     std::optional<double> eps_reward = std::nullopt);

// Missing measurements serialize as null: membership inference does not
// apply to environment targets, reconstruction only to them.
struct AttackReport {
  std::string target;
  std::optional<double> pre_traversal_prob;  // the agent before unlearning
  std::optional<double> traversal_prob;
  std::optional<double> reference_prob;
  bool distinguishable = false;
  std::optional<double> reconstruction_success_rate;
  std::optional<double> reconstruction_before;
  std::optional<double> reconstruction_reference;  // an agent that never saw the grid
  std::optional<double> kl_estimate;
  std::optional<double> kl_bound;
  std::size_t shared_states = 0;
  std::string error;  // why an attack could not be mounted

  nlohmann::json to_json() const;
};

std::string describe_target(const UnlearnRequest& target);

}  // namespace au::adversary
