#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agent_unlearn/adversary.hpp"
#include "agent_unlearn/conversion.hpp"
#include "agent_unlearn/metrics.hpp"
#include "agent_unlearn/remote_backend.hpp"
#include "agent_unlearn/unlearning.hpp"

namespace au::experiment {

using unlearn::Scenario;
using unlearn::SequenceMode;
using unlearn::Strategy;

struct GridSettings {
  std::size_t count = 5;
  int width = 10;
  int height = 10;
  int obstacles = 15;
  int treasures = 3;
  std::vector<std::uint64_t> seeds;  // explicit per-grid seeds; overrides count
};

struct ScenarioSettings {
  Scenario kind = Scenario::kState;
  std::size_t states = 1;
  std::size_t sequence_length = 3;
  SequenceMode sequence_mode = SequenceMode::kFullSequence;
  std::size_t requests_per_grid = 1;
};

struct BackendSettings {
  agent::BackendKind kind = agent::BackendKind::kScripted;
  agent::RemoteConfig remote;
};

struct TrainSettings {
  double beta = 1.0;
  std::size_t requests = 20;
  std::size_t eval_tasks = 4;
  std::size_t trials = 1;
  conversion::TrainConfig config;
};

struct AttackSettings {
  bool enabled = true;
  adversary::AttackConfig config;
  std::size_t kl_trials = 3;
  std::optional<double> l_lip = 1.0;
  std::size_t reconstruction_budget = 0;  // 0: four times the grid area
};

struct EvalConfig {
  std::size_t tasks = 10;
  std::size_t trials = 3;
  double step_tolerance = 0.05;
  double success_tolerance = 0.0;
};

// Thresholds the run is held to; unset ones are not checked.
struct Checks {
  std::optional<double> min_efficacy;
  std::optional<double> min_unlearn_at_1;
  bool zero_target_visits = false;
  bool preserve_success = false;
  std::optional<double> min_indistinguishable;  // fraction of attacked requests
  bool kl_within_bound = false;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  GridSettings grids;
  ScenarioSettings scenario;
  std::vector<Strategy> strategies{Strategy::kNL};
  BackendSettings backend;
  std::size_t m = 3;
  std::size_t attempts = 5;
  TrainSettings train;
  AttackSettings attack;
  EvalConfig eval;
  Checks checks;
  std::string output_dir = "results";
  std::size_t jobs = 1;  // 0: one per hardware thread
  bool allow_network = false;

  // Unknown keys and bad values throw kConfiguration; malformed JSON kParse.
  static ExperimentConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
  void validate() const;
};

// Reads and parses a JSON config file. Throws kConfiguration when the file
// cannot be read, kParse when it is not JSON.
ExperimentConfig load_config(const std::string& path);

// One unlearning request run through one strategy.
struct RequestRecord {
  std::string grid;
  Strategy strategy = Strategy::kNL;
  unlearn::UnlearnRequest request;
  std::size_t layout_redraws = 0;  // grid redrawn for lack of a usable target
  std::vector<bool> attempts;
  std::vector<std::string> templates;  // template id per attempt
  unlearn::VerificationReport report;   // final agent against the baseline
  metrics::EpisodeSets episodes;
  std::optional<adversary::AttackReport> attack;
};

struct StrategySummary {
  Strategy strategy = Strategy::kNL;
  std::size_t preference_pairs = 0;
  std::optional<conversion::TrainResult> training;  // none without pairs
  double eps_reward = 0.0;
  nlohmann::json checkpoint;
  metrics::MetricsRow metrics;
};

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ExperimentResult {
  std::vector<StrategySummary> strategies;
  std::vector<RequestRecord> records;  // grid-major, then request, then strategy
  std::map<std::string, metrics::Heatmap> heatmaps;
  std::vector<CheckOutcome> checks;

  bool passed() const;
  nlohmann::json summary() const;
};

enum class Mode { kRun, kCertify, kAttack };

// Trains one conversion model per strategy, then unlearns every request on
// every grid, scores it and attacks it. kCertify stops after training;
// kAttack skips the unlearning metrics checks. Grids run on `config.jobs`
// threads and results are reduced in grid order, so output does not depend
// on the thread count.
ExperimentResult run_experiment(const ExperimentConfig& config, Mode mode = Mode::kRun);

// Writes metrics.csv, heatmap_<grid>.csv, certificates.json,
// attack_report.json, training_trace.csv and unlearning_log.json as the mode
// calls for. Throws kIo.
void write_outputs(const ExperimentResult& result, const ExperimentConfig& config, Mode mode);

}  // namespace au::experiment
