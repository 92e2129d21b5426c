// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/oracles.hpp"
#include "agent_unlearn/conversion.hpp"
#include "agent_unlearn/error.hpp"
#include "agent_unlearn/experiment.hpp"
#include "agent_unlearn/memory.hpp"
#include "agent_unlearn/rng.hpp"

using namespace au;
using namespace au::experiment;
using conversion::ConversionModel;
using conversion::FeaturePair;

namespace {

constexpr std::uint64_t kSeed = 2024;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ExperimentConfig base_config(Scenario scenario, std::vector<Strategy> strategies, bool attack) {
  ExperimentConfig c;
  c.seed = kSeed;
  c.grids.count = 50;
  c.grids.width = 10;
  c.grids.height = 10;
  c.grids.obstacles = 15;
  c.grids.treasures = 3;
  c.scenario.kind = scenario;
  c.scenario.states = 1;
  c.strategies = std::move(strategies);
  c.attack.enabled = attack;
  c.jobs = 0;
  return c;
}

std::vector<const RequestRecord*> of(const ExperimentResult& r, Strategy s) {
  std::vector<const RequestRecord*> out;
  for (const auto& rec : r.records) {
    if (rec.strategy == s) out.push_back(&rec);
  }
  return out;
}

const StrategySummary& summary_of(const ExperimentResult& r, Strategy s) {
  for (const auto& x : r.strategies) {
    if (x.strategy == s) return x;
  }
  fail(ErrorCode::kInvalidArgument, "strategy missing from result");
}

// --- shared runs ---------------------------------------------------------------

struct Runs {
  std::optional<ExperimentResult> state_nl;
  double state_nl_seconds = 0;
  std::optional<ExperimentResult> trajectory_nl;
  std::optional<ExperimentResult> environment_nl;
};

Runs& runs() {
  static Runs r;
  return r;
}

const ExperimentResult& state_nl() {
  auto& r = runs();
  if (!r.state_nl) {
    const auto t0 = std::chrono::steady_clock::now();
    r.state_nl = run_experiment(base_config(Scenario::kState, {Strategy::kNL}, true));
    r.state_nl_seconds = seconds_since(t0);
  }
  return *r.state_nl;
}

const ExperimentResult& trajectory_nl() {
  auto& r = runs();
  if (!r.trajectory_nl) r.trajectory_nl = run_experiment(base_config(Scenario::kTrajectory, {Strategy::kNL}, true));
  return *r.trajectory_nl;
}

const ExperimentResult& environment_nl() {
  auto& r = runs();
  if (!r.environment_nl) {
    r.environment_nl = run_experiment(base_config(Scenario::kEnvironment, {Strategy::kNL}, true));
  }
  return *r.environment_nl;
}

// --- criteria ------------------------------------------------------------------

Verdict criterion_1() {
  const auto& r = state_nl();
  const double secs = runs().state_nl_seconds;
  const auto& m = summary_of(r, Strategy::kNL).metrics;
  std::size_t visits = 0;
  std::size_t same = 0;
  const auto recs = of(r, Strategy::kNL);
  for (const auto* rec : recs) {
    visits += rec->report.target_visits;
    same += rec->report.success_after == rec->report.success_before;
  }
  const bool ok = recs.size() == 50 && m.unlearn_efficacy == 1.0 && m.unlearn_at_1 >= 0.95 && visits == 0 &&
                  same == recs.size() && m.success_after == m.success_before && secs < 30.0;
  return {ok, "efficacy " + fmt("%.3f", m.unlearn_efficacy) + ", unlearn@1 " + fmt("%.3f", m.unlearn_at_1) +
                  ", target visits " + std::to_string(visits) + ", success unchanged on " +
                  std::to_string(same) + "/" + std::to_string(recs.size()) + " grids (" +
                  fmt("%.3f", m.success_before) + " -> " + fmt("%.3f", m.success_after) + "), " +
                  fmt("%.1f", secs) + " s"};
}

Verdict criterion_2() {
  const auto& s = summary_of(state_nl(), Strategy::kNL).metrics;
  const auto& e = summary_of(environment_nl(), Strategy::kNL).metrics;
  const double st = s.steps_after_target / s.steps_before;
  const double so = s.steps_after_other / s.steps_before_other;
  const double et = e.steps_after_target / e.steps_before;
  const double eo = e.steps_after_other / e.steps_before_other;
  const bool ok = st >= 1.0 && st <= 1.5 && so >= 0.95 && so <= 1.05 && et >= 1.5 && eo >= 0.95 && eo <= 1.05;
  return {ok, "state target " + fmt("%.3f", st) + " (" + fmt("%.2f", s.steps_before) + " -> " +
                  fmt("%.2f", s.steps_after_target) + "), state other " + fmt("%.3f", so) +
                  ", environment target " + fmt("%.3f", et) + " (" + fmt("%.2f", e.steps_before) + " -> " +
                  fmt("%.2f", e.steps_after_target) + "), environment other " + fmt("%.3f", eo)};
}

Verdict criterion_3() {
  const auto r = run_experiment(
      base_config(Scenario::kState, {Strategy::kNL, Strategy::kCode, Strategy::kExample}, false));
  const double nl = summary_of(r, Strategy::kNL).metrics.unlearn_efficacy;
  const double code = summary_of(r, Strategy::kCode).metrics.unlearn_efficacy;
  const double ex = summary_of(r, Strategy::kExample).metrics.unlearn_efficacy;
  const bool ok = nl >= code && code >= ex && (nl > code || code > ex);
  return {ok, "efficacy nl " + fmt("%.3f", nl) + ", code " + fmt("%.3f", code) + ", example " + fmt("%.3f", ex)};
}

double gauss(Rng& rng) {
  const double u1 = 1.0 - rng.uniform01();
  const double u2 = rng.uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Verdict criterion_4() {
  double worst_g = 0, worst_h = 0, worst_sym = 0, min_eig = 1e300;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(mix_seed(kSeed, 4, s));
    const int d = 2 + static_cast<int>(s % 7);
    Eigen::VectorXd base(d), phi(d);
    for (int i = 0; i < d; ++i) {
      base(i) = gauss(rng);
      phi(i) = base(i) + gauss(rng);
    }
    ConversionModel m(base, 0.5 + 1.5 * rng.uniform01());
    m.set_phi(phi);
    std::vector<FeaturePair> data;
    for (std::size_t k = 0; k < 8 + 4 * s; ++k) {
      Eigen::VectorXd dpsi(d);
      for (int i = 0; i < d; ++i) dpsi(i) = gauss(rng);
      data.push_back({dpsi, 0.2 + rng.uniform01()});
    }
    const Eigen::VectorXd g = conversion::gradient(m, data);
    const Eigen::MatrixXd H = conversion::hessian(m, data);
    const double h = 1e-5;
    Eigen::VectorXd gfd(d);
    Eigen::MatrixXd hfd(d, d);
    for (int i = 0; i < d; ++i) {
      ConversionModel a = m, b = m;
      Eigen::VectorXd pa = phi, pb = phi;
      pa(i) += h;
      pb(i) -= h;
      a.set_phi(pa);
      b.set_phi(pb);
      gfd(i) = (conversion::loss(a, data) - conversion::loss(b, data)) / (2 * h);
      hfd.col(i) = (conversion::gradient(a, data) - conversion::gradient(b, data)) / (2 * h);
    }
    worst_g = std::max(worst_g, (g - gfd).norm() / std::max(g.norm(), 1e-12));
    worst_h = std::max(worst_h, (H - hfd).cwiseAbs().maxCoeff() / std::max(1.0, H.cwiseAbs().maxCoeff()));
    worst_sym = std::max(worst_sym, (H - H.transpose()).cwiseAbs().maxCoeff());
    std::vector<std::vector<double>> a(static_cast<std::size_t>(d), std::vector<double>(static_cast<std::size_t>(d)));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) a[i][j] = H(i, j);
    min_eig = std::min(min_eig, oracle::jacobi_eigenvalues(a).front());
  }
  const bool ok = worst_g <= 1e-6 && worst_h <= 1e-5 && worst_sym == 0.0 && min_eig >= -1e-12;
  return {ok, "max gradient rel. error " + fmt("%.2e", worst_g) + ", max hessian error " + fmt("%.2e", worst_h) +
                  ", asymmetry " + fmt("%.1e", worst_sym) + ", min eigenvalue " + fmt("%.2e", min_eig)};
}

Verdict criterion_5() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(mix_seed(kSeed, 5));
  Eigen::VectorXd w(4);
  for (int i = 0; i < 4; ++i) w(i) = gauss(rng);
  // Weighted pairs in both orientations put the optimum at w exactly.
  std::vector<FeaturePair> data;
  for (int k = 0; k < 64; ++k) {
    Eigen::VectorXd d(4);
    for (int i = 0; i < 4; ++i) d(i) = 0.5 * gauss(rng);
    const double p = conversion::sigmoid(w.dot(d));
    data.push_back({d, p});
    data.push_back({-d, 1 - p});
  }
  ConversionModel m(Eigen::VectorXd::Zero(4), 1.0);
  conversion::TrainConfig cfg;
  cfg.max_iters = 5000;
  cfg.tol = 1e-13;
  cfg.ball_radius = 2 * w.norm();
  const auto r = conversion::train(m, data, cfg);
  if (!r.certificates || !r.certificates->strongly_convex) return {false, "instance is not certified strongly convex"};
  const auto& c = *r.certificates;
  const double bound = 1 - c.eta * c.alpha;
  double worst = 0;
  std::size_t ratios = 0;
  for (const auto& row : r.trace) {
    if (std::isnan(row.gap_ratio)) continue;
    worst = std::max(worst, row.gap_ratio);
    ++ratios;
  }
  const double gap0 = r.trace.front().loss - r.reference_loss;
  const auto k_max = static_cast<std::size_t>(std::ceil(std::log(gap0 / 1e-8) / -std::log(bound)));
  std::size_t hit = r.trace.size();
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    if (r.trace[i].loss - r.reference_loss < 1e-8) {
      hit = r.trace[i].iter;
      break;
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = ratios > 0 && worst <= bound + 1e-3 && hit <= k_max && secs < 5.0;
  return {ok, "eta " + fmt("%.4f", c.eta) + ", alpha " + fmt("%.4f", c.alpha) + ", max ratio " + fmt("%.5f", worst) +
                  " against " + fmt("%.5f", bound) + ", gap < 1e-8 at iteration " + std::to_string(hit) +
                  " of bound " + std::to_string(k_max) + ", " + fmt("%.2f", secs) + " s"};
}

Verdict criterion_6() {
  Rng rng(mix_seed(kSeed, 6));
  const Eigen::MatrixXd feats = Eigen::MatrixXd::Identity(8, 8);
  Eigen::VectorXd base(8), Q(8);
  for (int i = 0; i < 8; ++i) {
    base(i) = gauss(rng);
    Q(i) = gauss(rng);
  }
  const double beta = 1.0;
  const auto data = conversion::exact_preference_pairs(feats, Q, beta);
  ConversionModel m(base, beta);
  conversion::TrainConfig cfg;
  cfg.max_iters = 20000;
  cfg.tol = 1e-12;
  cfg.reference = false;
  cfg.ball_radius = 4 * Q.norm();
  conversion::train(m, data, cfg);
  // Independent closed form: base softmax tilted by e^Q.
  Eigen::VectorXd want(8);
  double z = 0;
  for (int i = 0; i < 8; ++i) z += std::exp(base(i) + Q(i));
  for (int i = 0; i < 8; ++i) want(i) = std::exp(base(i) + Q(i)) / z;
  const Eigen::VectorXd got = m.policy(feats);
  const double tv = 0.5 * (got - want).cwiseAbs().sum();
  double worst = 0;
  for (int a = 0; a < 8; ++a) {
    for (int b = 0; b < 8; ++b) {
      if (a == b) continue;
      const double p_star = 1.0 / (1.0 + std::exp(-beta * (Q(a) - Q(b))));
      const double delta = (m.phi()(a) - m.phi()(b)) - (base(a) - base(b));
      worst = std::max(worst, std::abs(conversion::sigmoid(beta * delta) - p_star));
    }
  }
  return {tv <= 1e-3 && worst <= 1e-6, "total variation " + fmt("%.2e", tv) + ", worst calibration error " + fmt("%.2e", worst)};
}

struct AttackTally {
  std::size_t grids = 0;
  std::size_t mounted = 0;
  std::size_t within = 0;
  double min_pre = 1.0;
  double mean_gap = 0.0;
};

AttackTally tally(const ExperimentResult& r) {
  AttackTally t;
  for (const auto* rec : of(r, Strategy::kNL)) {
    ++t.grids;
    const auto& a = rec->attack;
    if (!a || !a->traversal_prob || !a->reference_prob || !a->pre_traversal_prob) continue;
    ++t.mounted;
    t.min_pre = std::min(t.min_pre, *a->pre_traversal_prob);
    const double gap = std::abs(*a->traversal_prob - *a->reference_prob);
    t.mean_gap += gap;
    t.within += gap <= 0.05;
  }
  if (t.mounted) t.mean_gap /= static_cast<double>(t.mounted);
  return t;
}

Verdict criterion_7() {
  const auto s = tally(state_nl());
  const auto t = tally(trajectory_nl());
  const auto good = [](const AttackTally& x) {
    return x.grids == 50 && x.mounted > 0 && x.min_pre >= 0.9 &&
           static_cast<double>(x.within) >= 0.95 * static_cast<double>(x.grids);
  };
  const auto line = [](const char* name, const AttackTally& x) {
    return std::string(name) + ": attack mounted on " + std::to_string(x.mounted) + "/" + std::to_string(x.grids) +
           ", min pre-unlearning traversal " + fmt("%.3f", x.min_pre) + ", |gap| <= 0.05 on " +
           std::to_string(x.within) + "/" + std::to_string(x.grids) + " (mean " + fmt("%.3f", x.mean_gap) + ")";
  };
  return {good(s) && good(t), line("state", s) + "; " + line("trajectory", t)};
}

Verdict criterion_8() {
  double before = 0, after = 0, never = 0;
  std::size_t n = 0;
  for (const auto* rec : of(environment_nl(), Strategy::kNL)) {
    const auto& a = rec->attack;
    if (!a || !a->reconstruction_before || !a->reconstruction_success_rate || !a->reconstruction_reference) continue;
    before += *a->reconstruction_before;
    after += *a->reconstruction_success_rate;
    never += *a->reconstruction_reference;
    ++n;
  }
  if (n == 0) return {false, "no reconstruction results"};
  before /= static_cast<double>(n);
  after /= static_cast<double>(n);
  never /= static_cast<double>(n);
  return {n == 50 && before >= 0.9 && after <= never + 0.10,
          "over " + std::to_string(n) + " grids: before " + fmt("%.3f", before) + ", unlearned " + fmt("%.3f", after) +
              ", never seen " + fmt("%.3f", never)};
}

Verdict criterion_9() {
  std::size_t checked = 0, ok = 0;
  double worst = 0, bound_min = 1e300;
  for (const ExperimentResult* r : {&state_nl(), &trajectory_nl(), &environment_nl()}) {
    for (const auto* rec : of(*r, Strategy::kNL)) {
      ++checked;
      const auto& a = rec->attack;
      if (!a || !a->kl_estimate || !a->kl_bound) continue;
      worst = std::max(worst, *a->kl_estimate);
      bound_min = std::min(bound_min, *a->kl_bound);
      ok += *a->kl_estimate <= 0.05 && *a->kl_estimate <= *a->kl_bound;
    }
  }
  return {checked == 150 && ok == checked,
          std::to_string(ok) + "/" + std::to_string(checked) + " requests within 0.05 and the bound; max KL " +
              fmt("%.4f", worst) + ", smallest bound " + fmt("%.4f", bound_min) + " (L_lip 1)"};
}

Verdict criterion_10() {
  double mean[3] = {0, 0, 0};
  const std::size_t ms[3] = {1, 3, 5};
  for (std::size_t s = 0; s < 20; ++s) {
    for (int k = 0; k < 3; ++k) {
      auto c = base_config(Scenario::kState, {Strategy::kExample}, false);
      c.seed = mix_seed(kSeed, 10, s);
      c.grids.count = 10;
      c.m = ms[k];
      mean[k] += run_experiment(c).strategies.front().metrics.unlearn_efficacy / 20.0;
    }
  }
  return {mean[0] < mean[1] && mean[1] <= mean[2],
          "mean efficacy m=1 " + fmt("%.3f", mean[0]) + ", m=3 " + fmt("%.3f", mean[1]) + ", m=5 " + fmt("%.3f", mean[2])};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

Verdict criterion_11() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "au_acceptance_determinism";
  fs::remove_all(root);
  std::vector<std::string> names;
  std::string first_dir;
  std::size_t identical = 0, compared = 0;
  for (std::size_t jobs : {1, 4}) {
    auto c = base_config(Scenario::kState, {Strategy::kNL, Strategy::kExample}, true);
    c.grids.count = 8;
    c.jobs = jobs;
    c.output_dir = (root / ("jobs" + std::to_string(jobs))).string();
    write_outputs(run_experiment(c), c, Mode::kRun);
    if (first_dir.empty()) {
      first_dir = c.output_dir;
      for (const auto& e : fs::directory_iterator(c.output_dir)) {
        if (e.path().extension() == ".csv") names.push_back(e.path().filename().string());
      }
      continue;
    }
    for (const auto& n : names) {
      ++compared;
      identical += slurp(fs::path(first_dir) / n) == slurp(fs::path(c.output_dir) / n);
    }
  }
  // Memory round trip through JSON and through a file.
  const auto g = env::generate(mix_seed(kSeed, 11), 10, 10, 15, 3, "persist");
  agent::MemoryStore mem;
  auto backend = unlearn::scripted_factory()(1);
  agent::run_episode(g, *backend, mem, {}, 400);
  const auto copy = agent::MemoryStore::from_json(mem.to_json());
  mem.set_file_path((root / "memory.json").string());
  mem.save();
  const auto loaded = agent::MemoryStore::load((root / "memory.json").string());
  const bool mem_ok = mem.size() > 0 && copy == mem && loaded == mem && loaded.to_json() == mem.to_json();
  return {compared >= 3 && identical == compared && mem_ok,
          std::to_string(identical) + "/" + std::to_string(compared) +
              " CSV files byte-identical across 1 and 4 threads; memory of " + std::to_string(mem.size()) +
              " entries " + (mem_ok ? "round-trips" : "does not round-trip")};
}

}  // namespace

int main() {
  const std::vector<std::function<Verdict()>> criteria{criterion_1, criterion_2, criterion_3, criterion_4,
                                                       criterion_5, criterion_6, criterion_7, criterion_8,
                                                       criterion_9, criterion_10, criterion_11};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i]();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s criterion %zu: %s\n", v.pass ? "PASS" : "FAIL", i + 1, v.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
