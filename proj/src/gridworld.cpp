#include "agent_unlearn/gridworld.hpp"

#include <algorithm>
#include <deque>

#include "agent_unlearn/error.hpp"
#include "agent_unlearn/rng.hpp"

namespace au::env {

std::string to_string(const Coord& c) {
  return std::to_string(c.row) + "," + std::to_string(c.col);
}

char action_token(Action a) {
  switch (a) {
    case Action::kUp: return 'U';
    case Action::kDown: return 'D';
    case Action::kLeft: return 'L';
    case Action::kRight: return 'R';
  }
  return '?';
}

std::optional<Action> parse_action_token(char c) {
  switch (c) {
    case 'U': case 'u': return Action::kUp;
    case 'D': case 'd': return Action::kDown;
    case 'L': case 'l': return Action::kLeft;
    case 'R': case 'r': return Action::kRight;
    default: return std::nullopt;
  }
}

Coord offset(Action a) {
  switch (a) {
    case Action::kUp: return {-1, 0};
    case Action::kDown: return {1, 0};
    case Action::kLeft: return {0, -1};
    case Action::kRight: return {0, 1};
  }
  return {0, 0};
}

Coord apply(Coord c, Action a) {
  const Coord d = offset(a);
  return {c.row + d.row, c.col + d.col};
}

GridSpec::GridSpec(int width, int height, std::vector<CellKind> cells, Coord start,
                   std::string env_id)
    : width_(width), height_(height), cells_(std::move(cells)), start_(start),
      env_id_(std::move(env_id)) {
  if (width_ <= 0 || height_ <= 0) {
    fail(ErrorCode::kInvariantViolation, "grid dimensions must be positive");
  }
  if (cells_.size() != static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_)) {
    fail(ErrorCode::kInvariantViolation, "cell matrix does not match height x width");
  }
  if (!in_bounds(start_) || at(start_) != CellKind::kEmpty) {
    fail(ErrorCode::kInvariantViolation, "start " + to_string(start_) + " is not an empty cell");
  }
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      if (at({r, c}) == CellKind::kTreasure) treasures_.push_back({r, c});
    }
  }
}

std::vector<Coord> GridSpec::obstacles() const {
  std::vector<Coord> out;
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      if (is_obstacle({r, c})) out.push_back({r, c});
    }
  }
  return out;
}

std::vector<Coord> GridSpec::free_cells() const {
  std::vector<Coord> out;
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      if (!is_obstacle({r, c})) out.push_back({r, c});
    }
  }
  return out;
}

GridSpec GridSpec::with_env_id(std::string env_id) const {
  GridSpec copy = *this;
  copy.env_id_ = std::move(env_id);
  return copy;
}

namespace {

std::vector<int> reachable_distances(const GridSpec& spec, Coord from) {
  std::vector<int> dist(static_cast<std::size_t>(spec.area()), -1);
  auto idx = [&](Coord c) {
    return static_cast<std::size_t>(c.row * spec.width() + c.col);
  };
  std::deque<Coord> queue{from};
  dist[idx(from)] = 0;
  while (!queue.empty()) {
    const Coord cur = queue.front();
    queue.pop_front();
    for (Action a : kActions) {
      const Coord next = apply(cur, a);
      if (!spec.is_free(next) || dist[idx(next)] >= 0) continue;
      dist[idx(next)] = dist[idx(cur)] + 1;
      queue.push_back(next);
    }
  }
  return dist;
}

bool all_treasures_reachable(const GridSpec& spec) {
  if (spec.treasures().empty()) return false;
  const auto dist = reachable_distances(spec, spec.start());
  return std::all_of(spec.treasures().begin(), spec.treasures().end(), [&](Coord t) {
    return dist[static_cast<std::size_t>(t.row * spec.width() + t.col)] >= 0;
  });
}

}  // namespace

void GridSpec::check_invariants() const {
  if (!all_treasures_reachable(*this)) {
    fail(ErrorCode::kInvariantViolation,
         "grid '" + env_id_ + "' has no treasures or an unreachable treasure");
  }
}

AgentState initial_state(const GridSpec& spec) { return AgentState{spec.start(), {}}; }

void check_state(const GridSpec& spec, const AgentState& state) {
  if (!spec.in_bounds(state.position)) {
    fail(ErrorCode::kInvariantViolation,
         "agent position " + to_string(state.position) + " is out of bounds");
  }
  if (spec.is_obstacle(state.position)) {
    fail(ErrorCode::kInvariantViolation,
         "agent position " + to_string(state.position) + " is an obstacle");
  }
  for (const Coord& c : state.collected) {
    if (!spec.in_bounds(c) || spec.at(c) != CellKind::kTreasure) {
      fail(ErrorCode::kInvariantViolation, "collected cell " + to_string(c) + " is not a treasure");
    }
  }
}

StepOutcome step(const GridSpec& spec, const AgentState& state, Action action) {
  check_state(spec, state);
  StepOutcome out{state, -kStepCost, false};
  const Coord target = apply(state.position, action);
  if (spec.is_free(target)) {
    out.next_state.position = target;
    if (spec.at(target) == CellKind::kTreasure &&
        out.next_state.collected.insert(target).second) {
      out.reward += kTreasureReward;
    }
  }
  out.done = out.next_state.collected.size() == spec.treasures().size();
  return out;
}

GridSpec generate(std::uint64_t seed, int width, int height, int n_obstacles, int n_treasures,
                  std::string env_id) {
  if (width <= 0 || height <= 0 || n_obstacles < 0 || n_treasures < 1) {
    fail(ErrorCode::kCapacity, "grid dimensions must be positive and at least one treasure is required");
  }
  const int area = width * height;
  if (n_obstacles + n_treasures + 1 > area) {
    fail(ErrorCode::kCapacity, "cannot place " + std::to_string(n_obstacles) + " obstacles, " +
                                   std::to_string(n_treasures) + " treasures and a start in " +
                                   std::to_string(area) + " cells");
  }
  if (env_id.empty()) env_id = "grid-" + std::to_string(seed);

  constexpr int kMaxAttempts = 10000;
  Rng rng(seed);
  std::vector<int> order(static_cast<std::size_t>(area));
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    for (int i = 0; i < area; ++i) order[static_cast<std::size_t>(i)] = i;
    // Partial Fisher-Yates: only the first 1 + obstacles + treasures slots matter.
    const int needed = 1 + n_obstacles + n_treasures;
    for (int i = 0; i < needed; ++i) {
      const auto j = static_cast<std::size_t>(i) +
                     rng.uniform_index(static_cast<std::uint64_t>(area - i));
      std::swap(order[static_cast<std::size_t>(i)], order[j]);
    }
    std::vector<CellKind> cells(static_cast<std::size_t>(area), CellKind::kEmpty);
    for (int i = 1; i <= n_obstacles; ++i) {
      cells[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = CellKind::kObstacle;
    }
    for (int i = 1 + n_obstacles; i < needed; ++i) {
      cells[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = CellKind::kTreasure;
    }
    const Coord start{order[0] / width, order[0] % width};
    GridSpec spec(width, height, std::move(cells), start, env_id);
    if (all_treasures_reachable(spec)) return spec;
  }
  fail(ErrorCode::kCapacity, "no layout with reachable treasures after " +
                                 std::to_string(kMaxAttempts) + " draws");
}

std::optional<std::vector<Coord>> bfs_oracle(const GridSpec& spec, Coord from, Coord to,
                                             const std::set<Coord>& forbidden) {
  if (!spec.is_free(from) || !spec.is_free(to)) {
    fail(ErrorCode::kInvalidArgument, "bfs endpoints must be free in-bounds cells");
  }
  if (from == to) return std::vector<Coord>{from};
  if (forbidden.contains(to)) return std::nullopt;

  const auto n = static_cast<std::size_t>(spec.area());
  auto idx = [&](Coord c) { return static_cast<std::size_t>(c.row * spec.width() + c.col); };
  constexpr int kUnseen = -1;
  std::vector<int> parent(n, kUnseen);
  parent[idx(from)] = static_cast<int>(idx(from));

  // FIFO order per level equals lexicographic order of discovery paths, so
  // the first discovery of `to` is the lexicographically smallest path.
  std::deque<Coord> queue{from};
  while (!queue.empty()) {
    const Coord cur = queue.front();
    queue.pop_front();
    for (Action a : kActions) {
      const Coord next = apply(cur, a);
      if (!spec.is_free(next) || forbidden.contains(next)) continue;
      if (parent[idx(next)] != kUnseen) continue;
      parent[idx(next)] = static_cast<int>(idx(cur));
      if (next == to) {
        std::vector<Coord> path{to};
        std::size_t at = idx(to);
        while (at != idx(from)) {
          at = static_cast<std::size_t>(parent[at]);
          path.push_back({static_cast<int>(at) / spec.width(), static_cast<int>(at) % spec.width()});
        }
        std::reverse(path.begin(), path.end());
        return path;
      }
      queue.push_back(next);
    }
  }
  return std::nullopt;
}

bool path_is_valid(const GridSpec& spec, const std::vector<Coord>& path) {
  if (path.empty()) return false;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (!spec.is_free(path[i])) return false;
    if (i > 0) {
      const int dr = std::abs(path[i].row - path[i - 1].row);
      const int dc = std::abs(path[i].col - path[i - 1].col);
      if (dr + dc != 1) return false;
    }
  }
  return true;
}

}  // namespace au::env
