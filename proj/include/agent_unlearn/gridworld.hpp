#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace au::env {

struct Coord {
  int row = 0;
  int col = 0;

  friend auto operator<=>(const Coord&, const Coord&) = default;
};

std::string to_string(const Coord& c);

enum class CellKind : std::uint8_t { kEmpty, kObstacle, kTreasure };

// Declaration order is the tie-break order used by every planner.
enum class Action : std::uint8_t { kUp, kDown, kLeft, kRight };

inline constexpr std::array<Action, 4> kActions = {Action::kUp, Action::kDown,
                                                   Action::kLeft, Action::kRight};

char action_token(Action a);  // 'U', 'D', 'L', 'R'
std::optional<Action> parse_action_token(char c);
Coord offset(Action a);
Coord apply(Coord c, Action a);

inline constexpr double kTreasureReward = 1.0;
inline constexpr double kStepCost = 0.01;

// Immutable grid layout. The constructor checks structural invariants
// (dimensions, start cell); check_invariants() additionally requires every
// treasure to be reachable from the start.
class GridSpec {
 public:
  GridSpec(int width, int height, std::vector<CellKind> cells, Coord start,
           std::string env_id);

  int width() const { return width_; }
  int height() const { return height_; }
  Coord start() const { return start_; }
  const std::string& env_id() const { return env_id_; }
  int area() const { return width_ * height_; }

  bool in_bounds(Coord c) const {
    return c.row >= 0 && c.col >= 0 && c.row < height_ && c.col < width_;
  }
  CellKind at(Coord c) const { return cells_[index(c)]; }
  bool is_obstacle(Coord c) const { return at(c) == CellKind::kObstacle; }
  bool is_free(Coord c) const { return in_bounds(c) && !is_obstacle(c); }

  const std::vector<Coord>& treasures() const { return treasures_; }
  std::vector<Coord> obstacles() const;
  std::vector<Coord> free_cells() const;

  GridSpec with_env_id(std::string env_id) const;

  // Throws kInvariantViolation unless all treasures are reachable from start.
  void check_invariants() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  std::size_t index(Coord c) const {
    return static_cast<std::size_t>(c.row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(c.col);
  }

  int width_;
  int height_;
  std::vector<CellKind> cells_;
  Coord start_;
  std::string env_id_;
  std::vector<Coord> treasures_;
};

struct AgentState {
  Coord position;
  std::set<Coord> collected;

  friend auto operator<=>(const AgentState&, const AgentState&) = default;
};

AgentState initial_state(const GridSpec& spec);

struct StepOutcome {
  AgentState next_state;
  double reward = 0.0;
  bool done = false;
};

struct Trajectory {
  std::vector<std::pair<AgentState, Action>> pairs;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

// Throws kInvariantViolation when the state is off-grid, on an obstacle, or
// claims to have collected a non-treasure cell.
void check_state(const GridSpec& spec, const AgentState& state);

// Deterministic transition T and reward R. Blocked moves keep the position.
StepOutcome step(const GridSpec& spec, const AgentState& state, Action action);

// Random layout: start, obstacles and treasures drawn without replacement,
// redrawn until every treasure is reachable. Throws kCapacity when the counts
// cannot fit or no valid layout is found.
GridSpec generate(std::uint64_t seed, int width, int height, int n_obstacles,
                  int n_treasures, std::string env_id = {});

// Shortest 4-connected path avoiding obstacles and `forbidden`. `from` itself
// is exempt from `forbidden`. Among shortest paths the one whose move sequence
// is lexicographically smallest under Up < Down < Left < Right is returned.
std::optional<std::vector<Coord>> bfs_oracle(const GridSpec& spec, Coord from, Coord to,
                                             const std::set<Coord>& forbidden = {});

bool path_is_valid(const GridSpec& spec, const std::vector<Coord>& path);

}  // namespace au::env
