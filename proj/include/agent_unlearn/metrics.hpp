#pragma once

#include <string>
#include <vector>

#include "agent_unlearn/episode.hpp"
#include "agent_unlearn/gridworld.hpp"

namespace au::metrics {

using agent::EpisodeResult;

struct MetricsRow {
  std::string method;
  double unlearn_efficacy = 0.0;
  double unlearn_at_1 = 0.0;
  double success_before = 0.0;
  double success_after = 0.0;
  double steps_before = 0.0;
  double steps_after_target = 0.0;
  double steps_after_other = 0.0;
  double steps_before_other = 0.0;
};

// Verification outcome of each unlearning attempt on one request, in order.
struct TaskLog {
  std::vector<bool> attempts;
};

inline constexpr std::size_t kMaxAttempts = 5;

struct EpisodeSets {
  std::vector<EpisodeResult> tasks_before;  // success rate
  std::vector<EpisodeResult> tasks_after;
  std::vector<EpisodeResult> target_before;  // steps in the target environment
  std::vector<EpisodeResult> target_after;
  std::vector<EpisodeResult> other_before;  // steps elsewhere
  std::vector<EpisodeResult> other_after;
};

// Throws kInvalidArgument when `logs` is empty or a log has no attempts or
// more than kMaxAttempts. Empty episode sets give 0.
MetricsRow compute_metrics(const std::string& method, const std::vector<TaskLog>& logs,
                           const EpisodeSets& episodes);

double success_rate(const std::vector<EpisodeResult>& episodes);
double mean_steps(const std::vector<EpisodeResult>& episodes);

using Heatmap = std::vector<std::vector<std::size_t>>;  // [row][col]

// Visits per cell, one per (state, action) pair. Throws kInvalidArgument
// when a trajectory leaves the free cells of `spec`.
Heatmap heatmap(const std::vector<env::Trajectory>& trajectories, const env::GridSpec& spec);

std::string metrics_csv_header();
std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string heatmap_csv(const Heatmap& map);

}  // namespace au::metrics
