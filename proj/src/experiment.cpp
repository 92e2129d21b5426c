#include "agent_unlearn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "agent_unlearn/error.hpp"
#include "agent_unlearn/rng.hpp"

namespace au::experiment {
namespace {

using nlohmann::json;
using unlearn::BackendFactory;
using env::Coord;
using unlearn::Measurement;
using unlearn::NavTask;
using unlearn::UnlearnRequest;
using unlearn::VerifyInputs;

// --- config parsing ---------------------------------------------------------

void only_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) fail(ErrorCode::kConfiguration, where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* x) { return k == x; })) {
      fail(ErrorCode::kConfiguration, "unknown key '" + k + "' in " + where);
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    const json& v = j.at(key);
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        fail(ErrorCode::kConfiguration, where + "." + key + " must be a non-negative integer");
      }
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer()) fail(ErrorCode::kConfiguration, where + "." + key + " must be an integer");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(ErrorCode::kConfiguration, where + "." + key + " must be true or false");
    }
    out = v.get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfiguration, where + "." + key + ": " + e.what());
  }
}

void read_opt(const json& j, const char* key, std::optional<double>& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
    return;
  }
  if (!j.at(key).is_number()) fail(ErrorCode::kConfiguration, where + "." + key + " must be a number");
  out = j.at(key).get<double>();
}

std::string read_string(const json& j, const char* key, const std::string& fallback,
                        const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string()) fail(ErrorCode::kConfiguration, where + "." + key + " must be a string");
  return j.at(key).get<std::string>();
}

template <class F>
auto parse_enum(F&& parse, const std::string& text) {
  try {
    return parse(text);
  } catch (const Error& e) {
    fail(ErrorCode::kConfiguration, e.what());
  }
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(); }

// --- worlds -----------------------------------------------------------------

// A grid the agent has lived in, plus a second grid that unlearning must
// leave alone.
struct World {
  std::uint64_t seed;
  env::GridSpec grid;
  env::GridSpec other;
  agent::MemoryStore memory;
  std::vector<Coord> route;  // the first collect run on `grid`
};

agent::EpisodeResult live_in(const env::GridSpec& g, const BackendFactory& factory,
                             agent::MemoryStore& memory, const ConstraintSet& constraints,
                             std::uint64_t seed) {
  auto backend = factory(seed);
  agent::EpisodeOptions opts;
  opts.record = true;
  return agent::run_episode(g, *backend, memory, constraints,
                            4 * static_cast<std::size_t>(g.area()), opts);
}

World make_world(std::uint64_t seed, const GridSettings& s, const std::string& id,
                 const BackendFactory& factory) {
  World w{seed,
          env::generate(seed, s.width, s.height, s.obstacles, s.treasures, id),
          env::generate(mix_seed(seed, 0x07E5ULL), s.width, s.height, s.obstacles, s.treasures,
                        id + "-other"),
          {},
          {}};
  w.route = live_in(w.grid, factory, w.memory, {}, mix_seed(seed, 1)).positions();
  live_in(w.other, factory, w.memory, {}, mix_seed(seed, 2));
  return w;
}

UnlearnRequest make_request(const World& w, const ScenarioSettings& s, std::size_t r) {
  const std::uint64_t seed = mix_seed(w.seed, 0x5EEDULL, r);
  const std::string& id = w.grid.env_id();
  switch (s.kind) {
    case Scenario::kState:
      return unlearn::make_state_request(id, unlearn::pick_states(w.grid, w.route, s.states, seed),
                                         seed);
    case Scenario::kTrajectory:
      return unlearn::make_trajectory_request(
          id, unlearn::pick_sequence(w.grid, w.route, s.sequence_length, seed), seed);
    case Scenario::kEnvironment:
      return unlearn::make_environment_request(id, seed);
  }
  fail(ErrorCode::kInvariantViolation, "unhandled scenario");
}

struct Prepared {
  World world;
  std::vector<UnlearnRequest> requests;
  std::size_t redraws = 0;
};

// A layout whose collect route offers no usable target is redrawn from a
// derived seed; the count of redraws is kept in the log.
constexpr std::size_t kMaxRedraws = 16;

Prepared prepare(std::uint64_t seed, const ExperimentConfig& config, std::size_t requests,
                 const std::string& id, const BackendFactory& factory) {
  std::string last;
  for (std::size_t k = 0; k <= kMaxRedraws; ++k) {
    const std::uint64_t s = k == 0 ? seed : mix_seed(seed, 0x2ED2AULL, k);
    try {
      Prepared p{make_world(s, config.grids, id, factory), {}, k};
      for (std::size_t r = 0; r < requests; ++r) p.requests.push_back(make_request(p.world, config.scenario, r));
      return p;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kAttackSetup) throw;
      last = e.what();
    }
  }
  fail(ErrorCode::kAttackSetup, id + ": " + last + " after " + std::to_string(kMaxRedraws) + " redraws");
}

VerifyInputs make_inputs(const World& w, const UnlearnRequest& req, const BackendFactory& factory,
                         std::size_t tasks, std::size_t trials, const EvalConfig& eval,
                         SequenceMode mode) {
  VerifyInputs in;
  in.grid = &w.grid;
  in.others = {&w.other};
  in.backend = factory;
  in.eval_tasks = unlearn::make_eval_tasks(req, w.grid, tasks, mix_seed(req.seed, 0x7A5CULL));
  in.settings.trials = trials;
  in.settings.step_tolerance = eval.step_tolerance;
  in.settings.success_tolerance = eval.success_tolerance;
  in.settings.sequence_mode = mode;
  in.settings.seed = mix_seed(req.seed, 0xE7A1ULL);
  return in;
}

struct AttemptOutcome {
  bool ok = false;
  std::optional<unlearn::VerificationReport> report;
  agent::MemoryStore memory;
  ConstraintSet constraints;
  Measurement after;
};

// A prompt that fails the consistency check is a failed attempt that leaves
// the agent as it was.
AttemptOutcome attempt(const UnlearnRequest& req, const unlearn::PromptTemplate& tpl,
                       const VerifyInputs& in, const agent::MemoryStore& memory,
                       const Measurement& baseline) {
  AttemptOutcome out;
  out.memory = memory;
  const auto prompt = unlearn::render_prompt(tpl, req, in.settings.sequence_mode);
  try {
    out.report = unlearn::execute_unlearning(req, prompt, out.memory, out.constraints, in, baseline,
                                             &out.after);
    out.ok = out.report->objective_met && out.report->preservation_met;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kConsistency) throw;
    out.memory = memory;
    out.constraints = ConstraintSet{};
  }
  return out;
}

// Runs f(0..n-1) on up to `jobs` threads. The first failure stops new work
// and is rethrown once every thread has finished.
template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F&& f) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next++;
      if (i >= n || stop) return;
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
        stop = true;
      }
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t t = 0; t < jobs; ++t) threads.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

BackendFactory make_factory(const ExperimentConfig& config) {
  if (config.backend.kind == agent::BackendKind::kScripted) return unlearn::scripted_factory();
  auto client = std::make_shared<agent::ChatClient>(config.backend.remote,
                                                    agent::make_http_transport(config.backend.remote));
  return [client](std::uint64_t) -> std::unique_ptr<agent::PolicyBackend> {
    return std::make_unique<agent::RemoteBackend>(client);
  };
}

std::uint64_t grid_seed(const ExperimentConfig& c, std::size_t i) {
  return c.grids.seeds.empty() ? mix_seed(c.seed, 0x6121DULL, i) : c.grids.seeds[i];
}

std::size_t grid_count(const ExperimentConfig& c) {
  return c.grids.seeds.empty() ? c.grids.count : c.grids.seeds.size();
}

// --- training ---------------------------------------------------------------

struct Trained {
  StrategySummary summary;
  conversion::ConversionModel model;
};

std::vector<Trained> train_models(const ExperimentConfig& config, const BackendFactory& factory) {
  const std::size_t n = config.train.requests;
  std::vector<std::optional<Prepared>> worlds(n);
  std::vector<UnlearnRequest> requests(n);
  // Labels for every template of every trained strategy, keyed by request
  // environment and template id.
  std::vector<std::map<std::string, bool>> labels(n);
  parallel_for(n, config.jobs, [&](std::size_t j) {
    worlds[j].emplace(prepare(mix_seed(config.seed, 0x7121ULL, j), config, 1, "t" + std::to_string(j), factory));
    const World& w = worlds[j]->world;
    requests[j] = worlds[j]->requests.front();
    const auto in = make_inputs(w, requests[j], factory, config.train.eval_tasks,
                                config.train.trials, config.eval, config.scenario.sequence_mode);
    const Measurement baseline = unlearn::measure(in, w.memory, {});
    for (Strategy s : config.strategies) {
      for (const auto& tpl : unlearn::template_bank(config.scenario.kind, s)) {
        labels[j][tpl.id] = attempt(requests[j], tpl, in, w.memory, baseline).ok;
      }
    }
  });

  std::map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < n; ++j) index[requests[j].env_id] = j;
  const conversion::Evaluator lookup = [&](const UnlearnRequest& x, const unlearn::PromptTemplate& y) {
    return labels.at(index.at(x.env_id)).at(y.id);
  };

  std::vector<Trained> out;
  for (std::size_t k = 0; k < config.strategies.size(); ++k) {
    const Strategy s = config.strategies[k];
    conversion::ConversionModel model(conversion::default_base_parameters(), config.train.beta);
    StrategySummary summary;
    summary.strategy = s;
    if (n > 0) {
      const auto triples = conversion::build_dataset(model, requests, s, config.m, lookup,
                                                     mix_seed(config.seed, 0xDA7AULL, k));
      const auto pairs = conversion::to_feature_pairs(triples);
      summary.preference_pairs = pairs.size();
      if (!pairs.empty()) summary.training = conversion::train(model, pairs, config.train.config);
      summary.eps_reward = conversion::reward_gap(model, requests, s, lookup);
    }
    summary.checkpoint = model.checkpoint();
    out.push_back(Trained{std::move(summary), std::move(model)});
  }
  return out;
}

// --- evaluation -------------------------------------------------------------

struct GridOutput {
  std::vector<RequestRecord> records;
  std::optional<metrics::Heatmap> heatmap;
};

void append(std::vector<agent::EpisodeResult>& to, const std::vector<agent::EpisodeResult>& from) {
  to.insert(to.end(), from.begin(), from.end());
}

adversary::AttackReport attack_request(const ExperimentConfig& config, const World& w,
                                       const UnlearnRequest& req, const VerifyInputs& in,
                                       const BackendFactory& factory,
                                       const adversary::Agent& un, const adversary::Agent& ref,
                                       double eps_reward) {
  adversary::AttackReport rep;
  rep.target = adversary::describe_target(req);
  adversary::AttackConfig cfg = config.attack.config;
  cfg.seed = mix_seed(req.seed, 0xA77ACULL);
  const adversary::Agent before{factory, {}, w.memory, "before"};
  std::optional<double> l_lip = config.attack.l_lip;
  const std::uint64_t kl_seed = mix_seed(req.seed, 0x4B1ULL);

  std::vector<NavTask> kl_tasks = in.eval_tasks;
  if (req.scenario == Scenario::kEnvironment) {
    const std::size_t budget = config.attack.reconstruction_budget
                                   ? config.attack.reconstruction_budget
                                   : 4 * static_cast<std::size_t>(w.grid.area());
    const std::uint64_t seed = mix_seed(req.seed, 0x2EC0ULL);
    rep.reconstruction_before = adversary::reconstruct_environment(w.grid, before, budget, seed).success_rate;
    rep.reconstruction_success_rate = adversary::reconstruct_environment(w.grid, un, budget, seed).success_rate;
    rep.reconstruction_reference = adversary::reconstruct_environment(w.grid, ref, budget, seed).success_rate;
  } else {
    try {
      const auto verdict = adversary::inference_attack(req, w.grid, un, ref, cfg);
      rep.traversal_prob = verdict.traversal_prob;
      rep.reference_prob = verdict.reference_prob;
      rep.distinguishable = verdict.distinguishable;
      rep.pre_traversal_prob = adversary::traversal_probability(req, w.grid, before, verdict.tasks, cfg);
      kl_tasks = verdict.tasks;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kAttackSetup) throw;
      rep.error = e.what();
    }
  }
  try {
    const auto kl = adversary::behavior_kl(un, ref, w.grid, kl_tasks, config.attack.kl_trials, kl_seed,
                                           l_lip, eps_reward);
    rep.kl_estimate = kl.kl;
    rep.kl_bound = kl.bound;
    rep.shared_states = kl.shared_states;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kEstimation) throw;
    rep.error += (rep.error.empty() ? "" : "; ") + std::string(e.what());
  }
  return rep;
}

GridOutput run_grid(const ExperimentConfig& config, Mode mode, std::size_t i,
                    const std::vector<Trained>& models, const BackendFactory& factory) {
  GridOutput out;
  const Prepared prep = prepare(grid_seed(config, i), config, config.scenario.requests_per_grid,
                                "g" + std::to_string(i), factory);
  const World& w = prep.world;
  const SequenceMode seq = config.scenario.sequence_mode;
  for (const UnlearnRequest& req : prep.requests) {
    const auto in = make_inputs(w, req, factory, config.eval.tasks, config.eval.trials, config.eval, seq);
    const Measurement baseline = unlearn::measure(in, w.memory, {});
    const auto target = unlearn::request_directives(req, seq);
    std::vector<bool> preserved;
    for (const auto& t : in.eval_tasks) {
      preserved.push_back(req.scenario == Scenario::kEnvironment ||
                          unlearn::admissible_distance(w.grid, t.start, t.goal, target).has_value());
    }

    // An agent that never held the target: the full directives from day one
    // and a memory gathered under them.
    adversary::Agent reference{factory, {}, {}, "reference"};
    const bool attacking = config.attack.enabled && mode != Mode::kCertify;
    if (attacking) {
      reference.constraints.merge(req.env_id, target);
      if (req.scenario != Scenario::kEnvironment) {
        live_in(w.grid, factory, reference.memory, reference.constraints, mix_seed(w.seed, 1));
      }
      live_in(w.other, factory, reference.memory, reference.constraints, mix_seed(w.seed, 2));
    }

    for (const Trained& t : models) {
      RequestRecord rec;
      rec.grid = w.grid.env_id();
      rec.strategy = t.summary.strategy;
      rec.request = req;
      rec.layout_redraws = prep.redraws;
      AttemptOutcome last;
      for (std::size_t a = 0; a < config.attempts; ++a) {
        const auto drawn = conversion::sample_prompts(t.model, req, rec.strategy, 1,
                                                      mix_seed(req.seed, 0xA77EULL, a));
        last = attempt(req, *drawn.front(), in, w.memory, baseline);
        rec.attempts.push_back(last.ok);
        rec.templates.push_back(drawn.front()->id);
        if (last.ok) break;
      }
      if (!last.report) {
        last.report = unlearn::verify(req, in, last.memory, last.constraints, baseline, &last.after);
      }
      rec.report = *last.report;

      auto& ep = rec.episodes;
      for (std::size_t k = 0; k < in.eval_tasks.size(); ++k) {
        if (!preserved[k]) continue;
        for (std::size_t tr = 0; tr < in.settings.trials; ++tr) {
          ep.tasks_before.push_back(baseline.nav.at(k * in.settings.trials + tr));
          ep.tasks_after.push_back(last.after.nav.at(k * in.settings.trials + tr));
        }
      }
      append(ep.target_before, baseline.collect);
      append(ep.target_after, last.after.collect);
      for (const auto& g : baseline.others) append(ep.other_before, g);
      for (const auto& g : last.after.others) append(ep.other_after, g);

      if (!out.heatmap && mode == Mode::kRun) {
        std::vector<env::Trajectory> trajectories;
        for (const auto& e : last.after.nav) trajectories.push_back(e.trajectory);
        for (const auto& e : last.after.collect) trajectories.push_back(e.trajectory);
        out.heatmap = metrics::heatmap(trajectories, w.grid);
      }

      if (attacking) {
        const adversary::Agent un{factory, last.constraints, last.memory, "unlearned"};
        rec.attack = attack_request(config, w, req, in, factory, un, reference, t.summary.eps_reward);
      }
      // Episode trajectories are only needed for the heatmap.
      for (auto* set : {&ep.tasks_before, &ep.tasks_after, &ep.target_before, &ep.target_after,
                        &ep.other_before, &ep.other_after}) {
        for (auto& e : *set) e.trajectory = {};
      }
      out.records.push_back(std::move(rec));
    }
  }
  return out;
}

std::string fraction(std::size_t a, std::size_t b) {
  return std::to_string(a) + "/" + std::to_string(b);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::vector<CheckOutcome> evaluate_checks(const ExperimentConfig& config, Mode mode,
                                          const ExperimentResult& r) {
  std::vector<CheckOutcome> out;
  const Checks& c = config.checks;
  if (mode == Mode::kCertify) {
    for (const auto& s : r.strategies) {
      if (!s.training) continue;
      const auto& t = *s.training;
      const std::string name = unlearn::to_string(s.strategy);
      // Separable preference data has no finite minimizer, so the loss is
      // held to steady descent rather than to convergence.
      bool descent = !t.trace.empty();
      for (std::size_t k = 1; k < t.trace.size(); ++k) {
        descent = descent && t.trace[k].loss <= t.trace[k - 1].loss * (1.0 + 1e-12);
      }
      out.push_back({"descent:" + name, descent,
                     "loss " + fmt(t.trace.empty() ? 0.0 : t.trace.front().loss) + " to " +
                         fmt(t.trace.empty() ? 0.0 : t.trace.back().loss) + " over " +
                         std::to_string(t.trace.size()) + " iterations at eta " + fmt(t.eta)});
      if (t.certificates && std::isfinite(t.max_gap_ratio)) {
        const double bound = t.certificates->contraction_bound;
        out.push_back({"contraction:" + name, t.max_gap_ratio <= bound + 1e-3,
                       "max gap ratio " + fmt(t.max_gap_ratio) + " against bound " + fmt(bound)});
      }
    }
    return out;
  }
  for (const auto& s : r.strategies) {
    const std::string name = unlearn::to_string(s.strategy);
    std::vector<const RequestRecord*> mine;
    for (const auto& rec : r.records) {
      if (rec.strategy == s.strategy) mine.push_back(&rec);
    }
    if (mode == Mode::kRun) {
      if (c.min_efficacy) {
        out.push_back({"efficacy:" + name, s.metrics.unlearn_efficacy >= *c.min_efficacy,
                       fmt(s.metrics.unlearn_efficacy) + " against " + fmt(*c.min_efficacy)});
      }
      if (c.min_unlearn_at_1) {
        out.push_back({"unlearn_at_1:" + name, s.metrics.unlearn_at_1 >= *c.min_unlearn_at_1,
                       fmt(s.metrics.unlearn_at_1) + " against " + fmt(*c.min_unlearn_at_1)});
      }
      if (c.zero_target_visits && config.scenario.kind != Scenario::kEnvironment) {
        std::size_t hits = 0;
        for (const auto* rec : mine) hits += rec->report.target_visits + rec->report.sequence_realizations;
        out.push_back({"target_visits:" + name, hits == 0, std::to_string(hits) + " after unlearning"});
      }
      if (c.preserve_success) {
        std::size_t kept = 0;
        for (const auto* rec : mine) {
          kept += rec->report.success_after >= rec->report.success_before - config.eval.success_tolerance;
        }
        out.push_back({"preserve_success:" + name, kept == mine.size(),
                       fraction(kept, mine.size()) + " requests kept their success rate"});
      }
    }
    if (c.min_indistinguishable && config.scenario.kind != Scenario::kEnvironment) {
      std::size_t quiet = 0;
      for (const auto* rec : mine) {
        quiet += rec->attack && rec->attack->traversal_prob && !rec->attack->distinguishable;
      }
      const double rate = mine.empty() ? 0.0 : static_cast<double>(quiet) / static_cast<double>(mine.size());
      out.push_back({"indistinguishable:" + name, !mine.empty() && rate >= *c.min_indistinguishable,
                     fraction(quiet, mine.size()) + " requests within the margin"});
    }
    if (c.kl_within_bound) {
      std::size_t within = 0;
      for (const auto* rec : mine) {
        const auto& a = rec->attack;
        within += a && a->kl_estimate && a->kl_bound && *a->kl_estimate <= *a->kl_bound;
      }
      out.push_back({"kl_bound:" + name, !mine.empty() && within == mine.size(),
                     fraction(within, mine.size()) + " requests within the KL bound"});
    }
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::kIo, "cannot write " + path.string());
  f << text;
  if (!f) fail(ErrorCode::kIo, "write failed for " + path.string());
}

std::string training_trace_csv(const ExperimentResult& r) {
  std::string out = "strategy,iter,loss,grad_norm,gap_ratio\n";
  char buf[160];
  for (const auto& s : r.strategies) {
    if (!s.training) continue;
    for (const auto& row : s.training->trace) {
      if (std::isfinite(row.gap_ratio)) {
        std::snprintf(buf, sizeof buf, ",%zu,%.12e,%.12e,%.12e\n", row.iter, row.loss, row.grad_norm,
                      row.gap_ratio);
      } else {
        std::snprintf(buf, sizeof buf, ",%zu,%.12e,%.12e,\n", row.iter, row.loss, row.grad_norm);
      }
      out += unlearn::to_string(s.strategy);
      out += buf;
    }
  }
  return out;
}

json certificates_json(const ExperimentResult& r) {
  json out = json::object();
  for (const auto& s : r.strategies) {
    json j{{"preference_pairs", s.preference_pairs},
           {"eps_reward", s.eps_reward},
           {"checkpoint", s.checkpoint}};
    if (s.training) {
      const auto& t = *s.training;
      j["trained"] = true;
      j["certificates"] = t.certificates ? t.certificates->to_json() : json();
      j["eta"] = t.eta;
      j["iterations"] = t.trace.empty() ? 0 : t.trace.back().iter;
      j["converged"] = t.converged;
      j["final_loss"] = t.trace.empty() ? json() : json(t.trace.back().loss);
      j["reference_loss"] = std::isfinite(t.reference_loss) ? json(t.reference_loss) : json();
      j["max_gap_ratio"] = std::isfinite(t.max_gap_ratio) ? json(t.max_gap_ratio) : json();
    } else {
      j["trained"] = false;
      j["certificates"] = json();
    }
    out[unlearn::to_string(s.strategy)] = j;
  }
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  ExperimentConfig c;
  only_keys(doc,
            {"seed", "grids", "scenario", "strategies", "strategy", "backend", "m", "attempts", "train",
             "attack", "eval", "checks", "output_dir", "jobs", "requests_per_grid"},
            "config");
  read(doc, "seed", c.seed, "config");
  read(doc, "m", c.m, "config");
  read(doc, "attempts", c.attempts, "config");
  read(doc, "jobs", c.jobs, "config");
  c.output_dir = read_string(doc, "output_dir", c.output_dir, "config");

  if (doc.contains("grids")) {
    const json& g = doc.at("grids");
    only_keys(g, {"count", "width", "height", "obstacles", "treasures", "seeds"}, "grids");
    read(g, "count", c.grids.count, "grids");
    read(g, "width", c.grids.width, "grids");
    read(g, "height", c.grids.height, "grids");
    read(g, "obstacles", c.grids.obstacles, "grids");
    read(g, "treasures", c.grids.treasures, "grids");
    read(g, "seeds", c.grids.seeds, "grids");
  }
  if (doc.contains("scenario")) {
    const json& s = doc.at("scenario");
    if (s.is_string()) {
      c.scenario.kind = parse_enum(unlearn::parse_scenario, s.get<std::string>());
    } else {
      only_keys(s, {"kind", "states", "sequence_length", "sequence_mode", "requests_per_grid"}, "scenario");
      c.scenario.kind = parse_enum(unlearn::parse_scenario,
                                   read_string(s, "kind", unlearn::to_string(c.scenario.kind), "scenario"));
      read(s, "states", c.scenario.states, "scenario");
      read(s, "sequence_length", c.scenario.sequence_length, "scenario");
      c.scenario.sequence_mode = parse_enum(
          unlearn::parse_sequence_mode,
          read_string(s, "sequence_mode", unlearn::to_string(c.scenario.sequence_mode), "scenario"));
      read(s, "requests_per_grid", c.scenario.requests_per_grid, "scenario");
    }
  }
  read(doc, "requests_per_grid", c.scenario.requests_per_grid, "config");
  if (doc.contains("strategies") && doc.contains("strategy")) {
    fail(ErrorCode::kConfiguration, "give either strategy or strategies, not both");
  }
  if (doc.contains("strategy")) {
    c.strategies = {parse_enum(unlearn::parse_strategy, read_string(doc, "strategy", "", "config"))};
  }
  if (doc.contains("strategies")) {
    const json& list = doc.at("strategies");
    if (!list.is_array()) fail(ErrorCode::kConfiguration, "strategies must be a list");
    c.strategies.clear();
    for (const auto& s : list) {
      if (!s.is_string()) fail(ErrorCode::kConfiguration, "strategies must be strings");
      c.strategies.push_back(parse_enum(unlearn::parse_strategy, s.get<std::string>()));
    }
  }
  if (doc.contains("backend")) {
    const json& b = doc.at("backend");
    if (b.is_object() && (b.contains("api_key") || b.contains("key"))) {
      fail(ErrorCode::kConfiguration,
           std::string("the API key is read from ") + agent::kApiKeyVariable + ", not from the config");
    }
    only_keys(b,
              {"kind", "endpoint", "model", "timeout_ms", "max_retries", "initial_backoff_ms",
               "backoff_factor", "max_in_flight"},
              "backend");
    const std::string kind = read_string(b, "kind", "scripted", "backend");
    if (kind == "scripted") {
      c.backend.kind = agent::BackendKind::kScripted;
    } else if (kind == "remote") {
      c.backend.kind = agent::BackendKind::kRemote;
    } else {
      fail(ErrorCode::kConfiguration, "unknown backend '" + kind + "'");
    }
    auto& r = c.backend.remote;
    r.endpoint = read_string(b, "endpoint", r.endpoint, "backend");
    r.model = read_string(b, "model", r.model, "backend");
    std::int64_t ms = r.timeout.count();
    read(b, "timeout_ms", ms, "backend");
    r.timeout = std::chrono::milliseconds(ms);
    ms = r.initial_backoff.count();
    read(b, "initial_backoff_ms", ms, "backend");
    r.initial_backoff = std::chrono::milliseconds(ms);
    read(b, "max_retries", r.max_retries, "backend");
    read(b, "backoff_factor", r.backoff_factor, "backend");
    read(b, "max_in_flight", r.max_in_flight, "backend");
  }
  if (doc.contains("train")) {
    const json& t = doc.at("train");
    only_keys(t, {"beta", "requests", "eval_tasks", "trials", "eta", "max_iters", "tol", "ball_radius"}, "train");
    read(t, "beta", c.train.beta, "train");
    read(t, "requests", c.train.requests, "train");
    read(t, "eval_tasks", c.train.eval_tasks, "train");
    read(t, "trials", c.train.trials, "train");
    read(t, "eta", c.train.config.eta, "train");
    read(t, "max_iters", c.train.config.max_iters, "train");
    read(t, "tol", c.train.config.tol, "train");
    read(t, "ball_radius", c.train.config.ball_radius, "train");
  }
  if (doc.contains("attack")) {
    const json& a = doc.at("attack");
    only_keys(a,
              {"enabled", "n_pairs", "trials_per_pair", "margin", "budget", "kl_trials", "l_lip",
               "reconstruction_budget"},
              "attack");
    read(a, "enabled", c.attack.enabled, "attack");
    read(a, "n_pairs", c.attack.config.n_pairs, "attack");
    read(a, "trials_per_pair", c.attack.config.trials_per_pair, "attack");
    read(a, "margin", c.attack.config.margin, "attack");
    read(a, "budget", c.attack.config.budget, "attack");
    read(a, "kl_trials", c.attack.kl_trials, "attack");
    read_opt(a, "l_lip", c.attack.l_lip, "attack");
    read(a, "reconstruction_budget", c.attack.reconstruction_budget, "attack");
  }
  if (doc.contains("eval")) {
    const json& e = doc.at("eval");
    only_keys(e, {"tasks", "trials", "step_tolerance", "success_tolerance"}, "eval");
    read(e, "tasks", c.eval.tasks, "eval");
    read(e, "trials", c.eval.trials, "eval");
    read(e, "step_tolerance", c.eval.step_tolerance, "eval");
    read(e, "success_tolerance", c.eval.success_tolerance, "eval");
  }
  if (doc.contains("checks")) {
    const json& k = doc.at("checks");
    only_keys(k,
              {"min_efficacy", "min_unlearn_at_1", "zero_target_visits", "preserve_success",
               "min_indistinguishable", "kl_within_bound"},
              "checks");
    read_opt(k, "min_efficacy", c.checks.min_efficacy, "checks");
    read_opt(k, "min_unlearn_at_1", c.checks.min_unlearn_at_1, "checks");
    read(k, "zero_target_visits", c.checks.zero_target_visits, "checks");
    read(k, "preserve_success", c.checks.preserve_success, "checks");
    read_opt(k, "min_indistinguishable", c.checks.min_indistinguishable, "checks");
    read(k, "kl_within_bound", c.checks.kl_within_bound, "checks");
  }
  return c;
}

json ExperimentConfig::to_json() const {
  json strategies_json = json::array();
  for (Strategy s : strategies) strategies_json.push_back(unlearn::to_string(s));
  json j{{"seed", seed},
         {"grids",
          {{"count", grids.count},
           {"width", grids.width},
           {"height", grids.height},
           {"obstacles", grids.obstacles},
           {"treasures", grids.treasures},
           {"seeds", grids.seeds}}},
         {"scenario",
          {{"kind", unlearn::to_string(scenario.kind)},
           {"states", scenario.states},
           {"sequence_length", scenario.sequence_length},
           {"sequence_mode", unlearn::to_string(scenario.sequence_mode)},
           {"requests_per_grid", scenario.requests_per_grid}}},
         {"strategies", strategies_json},
         {"m", m},
         {"attempts", attempts},
         {"train",
          {{"beta", train.beta},
           {"requests", train.requests},
           {"eval_tasks", train.eval_tasks},
           {"trials", train.trials},
           {"eta", train.config.eta},
           {"max_iters", train.config.max_iters},
           {"tol", train.config.tol},
           {"ball_radius", train.config.ball_radius}}},
         {"attack",
          {{"enabled", attack.enabled},
           {"n_pairs", attack.config.n_pairs},
           {"trials_per_pair", attack.config.trials_per_pair},
           {"margin", attack.config.margin},
           {"budget", attack.config.budget},
           {"kl_trials", attack.kl_trials},
           {"l_lip", opt_json(attack.l_lip)},
           {"reconstruction_budget", attack.reconstruction_budget}}},
         {"eval",
          {{"tasks", eval.tasks},
           {"trials", eval.trials},
           {"step_tolerance", eval.step_tolerance},
           {"success_tolerance", eval.success_tolerance}}},
         {"checks",
          {{"min_efficacy", opt_json(checks.min_efficacy)},
           {"min_unlearn_at_1", opt_json(checks.min_unlearn_at_1)},
           {"zero_target_visits", checks.zero_target_visits},
           {"preserve_success", checks.preserve_success},
           {"min_indistinguishable", opt_json(checks.min_indistinguishable)},
           {"kl_within_bound", checks.kl_within_bound}}},
         {"output_dir", output_dir}};
  json b{{"kind", backend.kind == agent::BackendKind::kScripted ? "scripted" : "remote"}};
  if (backend.kind == agent::BackendKind::kRemote) {
    b["endpoint"] = backend.remote.endpoint;
    b["model"] = backend.remote.model;
    b["timeout_ms"] = backend.remote.timeout.count();
    b["max_retries"] = backend.remote.max_retries;
    b["initial_backoff_ms"] = backend.remote.initial_backoff.count();
    b["backoff_factor"] = backend.remote.backoff_factor;
    b["max_in_flight"] = backend.remote.max_in_flight;
  }
  j["backend"] = b;
  return j;
}

void ExperimentConfig::validate() const {
  const auto bad = [](const std::string& what) { fail(ErrorCode::kConfiguration, what); };
  if (grid_count(*this) == 0) bad("grids.count must be at least 1");
  if (grids.width < 1 || grids.height < 1) bad("grid width and height must be positive");
  if (grids.obstacles < 0) bad("grids.obstacles must be non-negative");
  if (grids.treasures < 1) bad("grids.treasures must be at least 1");
  if (static_cast<long long>(grids.obstacles) + grids.treasures + 1 >
      static_cast<long long>(grids.width) * grids.height) {
    bad("start, obstacles and treasures do not fit in the grid");
  }
  if (scenario.states < 1) bad("scenario.states must be at least 1");
  if (scenario.sequence_length < 2) bad("scenario.sequence_length must be at least 2");
  if (scenario.requests_per_grid < 1) bad("requests_per_grid must be at least 1");
  if (strategies.empty()) bad("at least one strategy is needed");
  if (std::set<Strategy>(strategies.begin(), strategies.end()).size() != strategies.size()) {
    bad("strategies are listed twice");
  }
  if (m < 1) bad("m must be at least 1");
  if (attempts < 1 || attempts > metrics::kMaxAttempts) {
    bad("attempts must be between 1 and " + std::to_string(metrics::kMaxAttempts) + ", got " +
        std::to_string(attempts));
  }
  if (!std::isfinite(train.beta) || train.beta < 0) bad("train.beta must be finite and non-negative");
  if (train.eval_tasks < 1 || train.trials < 1) bad("train.eval_tasks and train.trials must be positive");
  if (train.config.eta < 0 || !std::isfinite(train.config.eta)) bad("train.eta must be non-negative");
  if (train.config.max_iters < 1) bad("train.max_iters must be at least 1");
  try {
    attack.config.validate();
  } catch (const Error& e) {
    bad(std::string("attack: ") + e.what());
  }
  if (attack.kl_trials < 1) bad("attack.kl_trials must be at least 1");
  if (attack.l_lip && (!std::isfinite(*attack.l_lip) || *attack.l_lip < 0)) bad("attack.l_lip must be non-negative");
  if (attack.reconstruction_budget != 0 &&
      attack.reconstruction_budget < static_cast<std::size_t>(grids.width) * static_cast<std::size_t>(grids.height)) {
    bad("attack.reconstruction_budget must cover the grid area");
  }
  if (eval.tasks < 1 || eval.trials < 1) bad("eval.tasks and eval.trials must be positive");
  if (eval.step_tolerance < 0 || eval.success_tolerance < 0) bad("eval tolerances must be non-negative");
  for (const auto& v : {checks.min_efficacy, checks.min_unlearn_at_1, checks.min_indistinguishable}) {
    if (v && !(*v >= 0.0 && *v <= 1.0)) bad("check thresholds must lie in [0, 1]");
  }
  if (backend.kind == agent::BackendKind::kRemote) {
    backend.remote.validate();
    if (!allow_network) bad("the remote backend needs --allow-network");
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::kConfiguration, "cannot read config " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  json doc;
  try {
    doc = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParse, path + ": " + e.what());
  }
  return ExperimentConfig::from_json(doc);
}

bool ExperimentResult::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckOutcome& c) { return c.passed; });
}

json ExperimentResult::summary() const {
  json j;
  j["passed"] = passed();
  j["checks"] = json::array();
  for (const auto& c : checks) j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  j["strategies"] = json::array();
  for (const auto& s : strategies) {
    const auto& m = s.metrics;
    j["strategies"].push_back({{"strategy", unlearn::to_string(s.strategy)},
                               {"preference_pairs", s.preference_pairs},
                               {"eps_reward", s.eps_reward},
                               {"unlearn_efficacy", m.unlearn_efficacy},
                               {"unlearn_at_1", m.unlearn_at_1},
                               {"success_before", m.success_before},
                               {"success_after", m.success_after},
                               {"steps_before", m.steps_before},
                               {"steps_after_target", m.steps_after_target},
                               {"steps_before_other", m.steps_before_other},
                               {"steps_after_other", m.steps_after_other}});
  }
  j["requests"] = records.size();
  return j;
}

ExperimentResult run_experiment(const ExperimentConfig& config, Mode mode) {
  config.validate();
  const BackendFactory factory = make_factory(config);
  ExperimentResult result;
  std::vector<Trained> models = train_models(config, factory);
  for (const auto& t : models) result.strategies.push_back(t.summary);
  if (mode == Mode::kCertify) {
    result.checks = evaluate_checks(config, mode, result);
    return result;
  }

  const std::size_t n = grid_count(config);
  std::vector<GridOutput> grids(n);
  parallel_for(n, config.jobs, [&](std::size_t i) { grids[i] = run_grid(config, mode, i, models, factory); });

  for (std::size_t i = 0; i < n; ++i) {
    if (grids[i].heatmap) result.heatmaps["g" + std::to_string(i)] = std::move(*grids[i].heatmap);
    for (auto& rec : grids[i].records) result.records.push_back(std::move(rec));
  }
  for (auto& s : result.strategies) {
    std::vector<metrics::TaskLog> logs;
    metrics::EpisodeSets sets;
    for (const auto& rec : result.records) {
      if (rec.strategy != s.strategy) continue;
      logs.push_back({rec.attempts});
      append(sets.tasks_before, rec.episodes.tasks_before);
      append(sets.tasks_after, rec.episodes.tasks_after);
      append(sets.target_before, rec.episodes.target_before);
      append(sets.target_after, rec.episodes.target_after);
      append(sets.other_before, rec.episodes.other_before);
      append(sets.other_after, rec.episodes.other_after);
    }
    s.metrics = metrics::compute_metrics(unlearn::to_string(s.strategy), logs, sets);
  }
  result.checks = evaluate_checks(config, mode, result);
  return result;
}

void write_outputs(const ExperimentResult& result, const ExperimentConfig& config, Mode mode) {
  namespace fs = std::filesystem;
  const fs::path dir = config.output_dir.empty() ? fs::path(".") : fs::path(config.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());

  write_file(dir / "certificates.json", certificates_json(result).dump(2) + "\n");
  write_file(dir / "training_trace.csv", training_trace_csv(result));
  if (mode == Mode::kCertify) return;

  json attacks = json::array();
  for (const auto& rec : result.records) {
    if (!rec.attack) continue;
    json a = rec.attack->to_json();
    a["grid"] = rec.grid;
    a["strategy"] = unlearn::to_string(rec.strategy);
    attacks.push_back(a);
  }
  write_file(dir / "attack_report.json", attacks.dump(2) + "\n");
  if (mode == Mode::kAttack) return;

  std::vector<metrics::MetricsRow> rows;
  for (const auto& s : result.strategies) rows.push_back(s.metrics);
  write_file(dir / "metrics.csv", metrics::metrics_csv(rows));
  for (const auto& [grid, map] : result.heatmaps) {
    write_file(dir / ("heatmap_" + grid + ".csv"), metrics::heatmap_csv(map));
  }
  json log = json::array();
  for (const auto& rec : result.records) {
    json attempts = json::array();
    for (std::size_t a = 0; a < rec.attempts.size(); ++a) {
      attempts.push_back({{"template", rec.templates[a]}, {"ok", static_cast<bool>(rec.attempts[a])}});
    }
    log.push_back({{"grid", rec.grid},
                   {"strategy", unlearn::to_string(rec.strategy)},
                   {"target", adversary::describe_target(rec.request)},
                   {"layout_redraws", rec.layout_redraws},
                   {"attempts", attempts},
                   {"report", rec.report.to_json()}});
  }
  write_file(dir / "unlearning_log.json", log.dump(2) + "\n");
  json summary = result.summary();
  summary["config"] = config.to_json();
  write_file(dir / "summary.json", summary.dump(2) + "\n");
}

}  // namespace au::experiment
