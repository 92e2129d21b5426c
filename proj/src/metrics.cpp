#include "agent_unlearn/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "agent_unlearn/error.hpp"

namespace au::metrics {

double success_rate(const std::vector<EpisodeResult>& episodes) {
  if (episodes.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& e : episodes) ok += e.success;
  return static_cast<double>(ok) / static_cast<double>(episodes.size());
}

double mean_steps(const std::vector<EpisodeResult>& episodes) {
  if (episodes.empty()) return 0.0;
  double total = 0;
  for (const auto& e : episodes) total += static_cast<double>(e.steps);
  return total / static_cast<double>(episodes.size());
}

MetricsRow compute_metrics(const std::string& method, const std::vector<TaskLog>& logs,
                           const EpisodeSets& episodes) {
  if (logs.empty()) fail(ErrorCode::kInvalidArgument, "no unlearning tasks to score");
  std::size_t any = 0;
  std::size_t first = 0;
  for (const auto& log : logs) {
    if (log.attempts.empty() || log.attempts.size() > kMaxAttempts) {
      fail(ErrorCode::kInvalidArgument, "a task log must hold 1 to " + std::to_string(kMaxAttempts) +
                                            " attempts, got " + std::to_string(log.attempts.size()));
    }
    first += log.attempts.front();
    for (bool ok : log.attempts) {
      if (ok) {
        ++any;
        break;
      }
    }
  }
  const auto n = static_cast<double>(logs.size());
  MetricsRow row;
  row.method = method;
  row.unlearn_efficacy = static_cast<double>(any) / n;
  row.unlearn_at_1 = static_cast<double>(first) / n;
  row.success_before = success_rate(episodes.tasks_before);
  row.success_after = success_rate(episodes.tasks_after);
  row.steps_before = mean_steps(episodes.target_before);
  row.steps_after_target = mean_steps(episodes.target_after);
  row.steps_before_other = mean_steps(episodes.other_before);
  row.steps_after_other = mean_steps(episodes.other_after);
  return row;
}

Heatmap heatmap(const std::vector<env::Trajectory>& trajectories, const env::GridSpec& spec) {
  Heatmap map(static_cast<std::size_t>(spec.height()),
              std::vector<std::size_t>(static_cast<std::size_t>(spec.width()), 0));
  for (const auto& t : trajectories) {
    for (const auto& [state, action] : t.pairs) {
      const env::Coord c = state.position;
      if (!spec.is_free(c)) {
        fail(ErrorCode::kInvalidArgument,
             "trajectory visits " + env::to_string(c) + ", which is not a free cell of " + spec.env_id());
      }
      ++map[static_cast<std::size_t>(c.row)][static_cast<std::size_t>(c.col)];
    }
  }
  return map;
}

std::string metrics_csv_header() {
  return "method,unlearn_efficacy,unlearn_at_1,success_before,success_after,steps_before,"
         "steps_after_target,steps_after_other,steps_before_other\n";
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = metrics_csv_header();
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f,%.4f,%.4f,%.4f,%.4f\n", r.unlearn_efficacy,
                  r.unlearn_at_1, r.success_before, r.success_after, r.steps_before,
                  r.steps_after_target, r.steps_after_other, r.steps_before_other);
    out += r.method;
    out += buf;
  }
  return out;
}

std::string heatmap_csv(const Heatmap& map) {
  std::ostringstream out;
  for (const auto& row : map) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << '\n';
  }
  return out.str();
}

}  // namespace au::metrics
