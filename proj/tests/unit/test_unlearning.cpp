#include <doctest.h>

#include <regex>
#include <sstream>

#include "agent_unlearn/error.hpp"
#include "agent_unlearn/grid_io.hpp"
#include "agent_unlearn/rng.hpp"
#include "agent_unlearn/templates.hpp"
#include "agent_unlearn/unlearning.hpp"
#include "oracles.hpp"

using namespace au;
using namespace au::unlearn;
using agent::MemoryEntry;
using agent::MemoryStore;
using env::Action;
using env::AgentState;

namespace {

// Row 0 is the only short way from the left column to the right one.
const char* kCorridor =
    "S....\n"
    ".###.\n"
    ".....\n"
    "....T\n";

std::size_t count_regex_lines(const std::string& text, const std::regex& re) {
  std::istringstream in(text);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += std::regex_match(line, re);
  return n;
}

VerifyInputs inputs_for(const GridSpec& g, std::vector<NavTask> tasks, std::size_t trials = 1) {
  VerifyInputs in;
  in.grid = &g;
  in.backend = scripted_factory();
  in.eval_tasks = std::move(tasks);
  in.settings.trials = trials;
  in.settings.seed = 5;
  return in;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidArgument;
}

MemoryStore memory_from_route(const GridSpec& g) {
  MemoryStore m;
  agent::ScriptedBackend b;
  agent::run_episode(g, b, m, ConstraintSet{}, 200);
  return m;
}

}  // namespace

TEST_CASE("bank has six templates per scenario and strategy with unique ids") {
  std::set<std::string> ids;
  for (Scenario s : kScenarios) {
    for (Strategy t : kStrategies) {
      const auto& bank = template_bank(s, t);
      CHECK(bank.size() >= 6);
      for (const auto& tpl : bank) {
        CHECK(ids.insert(tpl.id).second);
        CHECK(&find_template(tpl.id) == &tpl);
        CHECK(tpl.scenario == s);
        CHECK(tpl.strategy == t);
      }
    }
  }
  CHECK_THROWS_AS(find_template("state/nl/99"), Error);
}

TEST_CASE("mean omission rates per family") {
  const auto mean = [](Strategy t) {
    double sum = 0;
    const auto& bank = template_bank(Scenario::kState, t);
    for (const auto& tpl : bank) sum += tpl.omission_probability;
    return sum / static_cast<double>(bank.size());
  };
  CHECK(mean(Strategy::kNL) == 0.0);
  CHECK(mean(Strategy::kCode) == doctest::Approx(0.05));
  CHECK(mean(Strategy::kExample) == doctest::Approx(0.2));
  for (Scenario s : kScenarios) {
    double nl = 1, code = 0, ex = 0;
    for (const auto& t : template_bank(s, Strategy::kNL)) nl = std::min(nl, expected_completeness(t));
    for (const auto& t : template_bank(s, Strategy::kCode)) code += expected_completeness(t) / 6;
    for (const auto& t : template_bank(s, Strategy::kExample)) ex += expected_completeness(t) / 6;
    CHECK(nl >= code);
    CHECK(code >= ex);
  }
}

TEST_CASE("every rendered prompt starts with the marker and stays parseable") {
  const auto req = make_trajectory_request("grid-1", {{1, 1}, {1, 2}, {2, 2}}, 3);
  for (Scenario s : kScenarios) {
    for (Strategy t : kStrategies) {
      for (const auto& tpl : template_bank(s, t)) {
        UnlearnRequest r = s == Scenario::kState ? make_state_request("grid-1", {{2, 3}}, 8)
                           : s == Scenario::kTrajectory ? req
                                                        : make_environment_request("grid-1", 8);
        const auto p = render_prompt(tpl, r);
        CHECK(p.prompt_text.rfind(std::string(kPromptMarker), 0) == 0);
        CHECK(p.template_id == tpl.id);
        CHECK(p.parsed == parse_directives(p.prompt_text));
      }
    }
  }
}

TEST_CASE("natural-language templates carry all three avoid directives") {
  const auto req = make_state_request("grid-7", {{1, 2}, {3, 4}, {5, 0}}, 11);
  const std::regex avoid(R"(\s*AVOID-STATE \d+,\d+\s*)");
  for (const auto& tpl : template_bank(Scenario::kState, Strategy::kNL)) {
    const auto p = render_prompt(tpl, req);
    CHECK(p.parsed.avoid_states == req.states);
    CHECK(count_regex_lines(p.prompt_text, avoid) == 3);
    CHECK(p.parsed.size() == 3);
  }
}

TEST_CASE("empty prompt parses to nothing and a bare directive to one cell") {
  CHECK(parse_directives("").empty());
  CHECK(parse_directives("AVOID-STATE 2,3").avoid_states == std::set<Coord>{{2, 3}});
}

TEST_CASE("example-based omission frequency over 1000 seeded draws") {
  Rng pick(2025);
  const auto& bank = template_bank(Scenario::kState, Strategy::kExample);
  std::size_t omitted = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const auto req = make_state_request("grid-0", {{4, 4}}, mix_seed(99, i));
    const auto& tpl = bank[pick.uniform_index(bank.size())];
    omitted += render_prompt(tpl, req).parsed.empty();
  }
  CHECK(std::abs(static_cast<double>(omitted) / 1000.0 - 0.2) <= 0.03);
}

TEST_CASE("a noisier template drops every directive a cleaner one drops") {
  Rng rng(4);
  for (Strategy t : {Strategy::kCode, Strategy::kExample}) {
    const auto& bank = template_bank(Scenario::kState, t);
    for (int trial = 0; trial < 300; ++trial) {
      std::set<Coord> cells;
      while (cells.size() < 4) cells.insert({static_cast<int>(rng.uniform_index(9)), static_cast<int>(rng.uniform_index(9))});
      const auto req = make_state_request("g", cells, rng.next_u64());
      for (const auto& a : bank) {
        for (const auto& b : bank) {
          if (a.omission_probability > b.omission_probability) continue;
          const auto pa = render_prompt(a, req).parsed.avoid_states;
          const auto pb = render_prompt(b, req).parsed.avoid_states;
          CHECK(std::includes(pa.begin(), pa.end(), pb.begin(), pb.end()));
        }
      }
    }
  }
}

TEST_CASE("request validation") {
  CHECK(code_of([] { validate(make_state_request("g", {}, 0)); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { validate(make_trajectory_request("g", {{0, 0}}, 0)); }) ==
        ErrorCode::kInvalidArgument);
  CHECK(code_of([] { validate(make_environment_request("", 0)); }) == ErrorCode::kInvalidArgument);
  CHECK_NOTHROW(validate(make_environment_request("g", 0)));
}

TEST_CASE("per-edge mode splits the route into steps") {
  const auto req = make_trajectory_request("g", {{0, 0}, {0, 1}, {1, 1}}, 0);
  CHECK(request_directives(req, SequenceMode::kFullSequence).forbid_sequences.size() == 1);
  const auto edges = request_directives(req, SequenceMode::kPerEdge).forbid_sequences;
  REQUIRE(edges.size() == 2);
  CHECK(edges[1] == std::vector<Coord>{{0, 1}, {1, 1}});
}

TEST_CASE("trajectory request with a prompt lacking FORBID-SEQUENCE is inconsistent") {
  const GridSpec g = env::from_text(kCorridor, "corridor");
  const auto req = make_trajectory_request("corridor", {{0, 1}, {0, 2}, {0, 3}}, 1);
  UnlearnPrompt p;
  p.prompt_text = std::string(kPromptMarker) + "\nAVOID-STATE 0,2\n";
  p.parsed = parse_directives(p.prompt_text);
  MemoryStore m;
  ConstraintSet cs;
  const auto in = inputs_for(g, {{{0, 0}, {0, 4}}});
  const Measurement base = measure(in, m, cs);
  CHECK(code_of([&] { execute_unlearning(req, p, m, cs, in, base); }) == ErrorCode::kConsistency);
  CHECK(cs.empty());
  // A prompt whose only directive was dropped is inconsistent too.
  p.prompt_text = std::string(kPromptMarker) + "\nplease forget\n";
  p.parsed = parse_directives(p.prompt_text);
  CHECK(code_of([&] { check_consistency(req, p, SequenceMode::kFullSequence); }) ==
        ErrorCode::kConsistency);
  // Targets must match the request.
  const auto state_req = make_state_request("corridor", {{0, 2}}, 1);
  p.prompt_text = "AVOID-STATE 1,0\n";
  p.parsed = parse_directives(p.prompt_text);
  CHECK(code_of([&] { check_consistency(state_req, p, SequenceMode::kFullSequence); }) ==
        ErrorCode::kConsistency);
}

TEST_CASE("pre-unlearning agent crosses the target on its only shortest path") {
  const GridSpec g = env::from_text(kCorridor, "corridor");
  const auto req = make_state_request("corridor", {{0, 2}}, 1);
  const auto in = inputs_for(g, {{{0, 0}, {0, 4}}});
  MemoryStore m;
  ConstraintSet none;
  const auto rep = verify(req, in, m, none, none);
  CHECK_FALSE(rep.objective_met);
  CHECK(rep.target_visits > 0);
  CHECK_FALSE(rep.checks.at("target_unvisited"));
}

TEST_CASE("state unlearning on the corridor fixture") {
  const GridSpec g = env::from_text(kCorridor, "corridor");
  MemoryStore m = memory_from_route(g);
  m.append(MemoryEntry{"corridor", AgentState{{0, 2}, {}}, Action::kRight, -0.01});
  const auto req = make_state_request("corridor", {{0, 2}}, 1);
  const auto prompt = render_prompt(template_bank(Scenario::kState, Strategy::kNL)[2], req);
  ConstraintSet cs;
  const auto in = inputs_for(g, {{{0, 0}, {0, 4}}, {{3, 0}, {0, 4}}, {{2, 2}, {0, 0}}}, 2);
  const Measurement base = measure(in, m, cs);
  const auto rep = execute_unlearning(req, prompt, m, cs, in, base);
  CHECK(rep.objective_met);
  CHECK(rep.preservation_met);
  CHECK(rep.target_visits == 0);
  CHECK(rep.success_after == 1.0);
  CHECK(cs.forbidden_states("corridor") == req.states);
  for (const auto& e : m.entries("corridor")) CHECK(e.state.position != Coord{0, 2});
  const auto j = rep.to_json();
  CHECK(j.at("target_unvisited") == true);
  CHECK(j.at("success_kept") == true);
  CHECK(j.contains("steps_after_target"));
}

TEST_CASE("environment unlearning empties memory and degrades the env") {
  const GridSpec g = env::generate(42, 10, 10, 15, 3);
  const GridSpec other = env::generate(43, 10, 10, 15, 3);
  MemoryStore m = memory_from_route(g);
  agent::ScriptedBackend b;
  agent::run_episode(other, b, m, ConstraintSet{}, 200);
  REQUIRE(m.entries(g.env_id()).size() > 0);
  const auto req = make_environment_request(g.env_id(), 3);
  const auto prompt = render_prompt(template_bank(Scenario::kEnvironment, Strategy::kNL)[0], req);
  ConstraintSet cs;
  auto in = inputs_for(g, make_eval_tasks(req, g, 4, 9), 5);
  in.others = {&other};
  const Measurement base = measure(in, m, cs);
  const auto rep = execute_unlearning(req, prompt, m, cs, in, base);
  CHECK(cs.is_degraded(g.env_id()));
  CHECK(m.entries(g.env_id()).empty());
  CHECK_FALSE(m.entries(other.env_id()).empty());
  CHECK(rep.objective_met);
  CHECK(rep.preservation_met);
  CHECK(rep.steps_after_target / rep.steps_before_target >= 1.5);
  CHECK(rep.steps_after_other == rep.steps_before_other);
}

TEST_CASE("post-unlearning agent never visits the target over 10 tasks x 10 trials") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GridSpec g = env::generate(300 + seed, 10, 10, 15, 3);
    MemoryStore m;
    agent::ScriptedBackend b;
    const auto route = agent::run_episode(g, b, m, ConstraintSet{}, 400).positions();
    const auto req = make_state_request(g.env_id(), pick_states(g, route, 1, seed), seed);
    const auto tasks = make_eval_tasks(req, g, 10, seed);
    // Half of the tasks go through the target before unlearning.
    std::size_t through = 0;
    for (const auto& t : tasks) {
      const auto p = env::bfs_oracle(g, t.start, t.goal);
      REQUIRE(p.has_value());
      through += std::any_of(p->begin(), p->end(), [&](Coord c) { return req.states.contains(c); });
    }
    CHECK(through >= 5);
    ConstraintSet cs;
    const auto in = inputs_for(g, tasks, 10);
    const Measurement base = measure(in, m, cs);
    const auto rep = execute_unlearning(
        req, render_prompt(template_bank(Scenario::kState, Strategy::kNL)[0], req), m, cs, in, base);
    CHECK(rep.target_visits == 0);
    CHECK(rep.rollouts == 110);
    CHECK(rep.objective_met);
    CHECK(rep.preservation_met);
    // Independent scan of fresh rollouts.
    for (const auto& e : measure(in, m, cs).nav) {
      for (const Coord& c : e.positions()) CHECK_FALSE(req.states.contains(c));
    }
  }
}

TEST_CASE("trajectory unlearning stops the sequence but keeps its cells") {
  std::size_t reused = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GridSpec g = env::generate(500 + seed, 10, 10, 15, 3);
    MemoryStore m;
    agent::ScriptedBackend b;
    const auto route = agent::run_episode(g, b, m, ConstraintSet{}, 400).positions();
    const auto tau = pick_sequence(g, route, 3, seed);
    CHECK(realizes_sequence(route, tau));
    const auto req = make_trajectory_request(g.env_id(), tau, seed);
    ConstraintSet cs;
    const auto in = inputs_for(g, make_eval_tasks(req, g, 10, seed), 2);
    const Measurement base = measure(in, m, cs);
    const auto rep = execute_unlearning(
        req, render_prompt(template_bank(Scenario::kTrajectory, Strategy::kNL)[1], req), m, cs, in,
        base);
    CHECK(rep.sequence_realizations == 0);
    CHECK(rep.checks.at("sequence_unrealized"));
    CHECK(rep.checks.at("success_kept"));
    for (const auto& e : measure(in, m, cs).collect) {
      const auto pos = e.positions();
      CHECK_FALSE(realizes_sequence(pos, tau));
      reused += std::any_of(pos.begin(), pos.end(), [&](Coord c) { return c == tau[1]; });
    }
    // No memory entry still spells the sequence.
    std::vector<Coord> remembered;
    for (const auto& e : m.entries(g.env_id())) remembered.push_back(e.state.position);
    CHECK_FALSE(realizes_sequence(remembered, tau));
  }
  CHECK(reused > 0);
}

TEST_CASE("verify rejects empty task lists") {
  const GridSpec g = env::from_text(kCorridor, "corridor");
  const auto req = make_state_request("corridor", {{0, 2}}, 1);
  MemoryStore m;
  ConstraintSet cs;
  CHECK(code_of([&] { verify(req, inputs_for(g, {}), m, cs, cs); }) == ErrorCode::kInvalidArgument);
  auto in = inputs_for(g, {{{0, 0}, {0, 4}}});
  in.settings.trials = 0;
  CHECK(code_of([&] { verify(req, in, m, cs, cs); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("admissible distance agrees with window-history oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 120; ++trial) {
    const int w = 3 + static_cast<int>(rng.uniform_index(4));
    const int h = 3 + static_cast<int>(rng.uniform_index(3));
    const GridSpec g = env::generate(rng.next_u64(), w, h, static_cast<int>(rng.uniform_index(4)), 1);
    const auto free = g.free_cells();
    const Coord from = free[rng.uniform_index(free.size())];
    const Coord to = free[rng.uniform_index(free.size())];
    DirectiveSet d;
    for (const Coord& c : free) {
      if (c != from && rng.bernoulli(0.08)) d.avoid_states.insert(c);
    }
    const std::size_t nseq = rng.uniform_index(3);
    for (std::size_t k = 0; k < nseq; ++k) {
      // random walk of 2..4 cells
      std::vector<Coord> seq{free[rng.uniform_index(free.size())]};
      const std::size_t len = 2 + rng.uniform_index(3);
      while (seq.size() < len) {
        const Coord n = env::apply(seq.back(), env::kActions[rng.uniform_index(4)]);
        if (g.is_free(n) && n != seq.back()) seq.push_back(n);
      }
      d.forbid_sequences.push_back(seq);
    }
    const auto got = admissible_distance(g, from, to, d);
    const auto want = oracle::window_distance(g, from, to, d.avoid_states, d.forbid_sequences);
    REQUIRE(got.has_value() == want.has_value());
    if (got) CHECK(static_cast<int>(*got) == *want);
  }
}

TEST_CASE("constrained action equals the unconstrained one off the target's paths") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GridSpec g = env::generate(700 + seed, 8, 8, 10, 1);
    const Coord goal = g.treasures().front();
    const auto free = g.free_cells();
    Rng rng(seed);
    Coord target = free[rng.uniform_index(free.size())];
    while (target == goal) target = free[rng.uniform_index(free.size())];
    ConstraintSet cs;
    DirectiveSet d;
    d.avoid_states = {target};
    cs.merge(g.env_id(), d);
    for (const Coord& c : free) {
      if (c == target || c == goal) continue;
      const auto plan = env::bfs_oracle(g, c, goal);
      if (!plan || std::find(plan->begin(), plan->end(), target) != plan->end()) continue;
      agent::PromptOptions opt;
      opt.trail = {c};
      MemoryStore none;
      const auto free_prompt = agent::assemble_prompt("collect all treasures", AgentState{c, {}}, none,
                                                      ConstraintSet{}, g.env_id(), opt);
      const auto held_prompt =
          agent::assemble_prompt("collect all treasures", AgentState{c, {}}, none, cs, g.env_id(), opt);
      Rng s1(0), s2(0);
      CHECK(agent::scripted_decide(free_prompt, g, s1) == agent::scripted_decide(held_prompt, g, s2));
    }
  }
}

TEST_CASE("degraded environment takes more steps than a known one") {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const GridSpec g = env::generate(900 + seed, 10, 10, 15, 3);
    MemoryStore m;
    agent::ScriptedBackend b;
    const auto greedy = agent::run_episode(g, b, m, ConstraintSet{}, 400);
    REQUIRE(greedy.success);
    ConstraintSet cs;
    DirectiveSet d;
    d.forget_envs = {g.env_id()};
    cs.merge(g.env_id(), d);
    double total = 0;
    for (std::uint64_t k = 0; k < 5; ++k) {
      agent::ScriptedBackend walker(k);
      total += static_cast<double>(
          agent::run_episode(g, walker, m, cs, 3 * greedy.steps).steps);
    }
    CHECK(total / 5 > static_cast<double>(greedy.steps));
  }
}

TEST_CASE("picked states sit on the route and keep treasures reachable") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const GridSpec g = env::generate(seed, 10, 10, 15, 3);
    MemoryStore m;
    agent::ScriptedBackend b;
    const auto route = agent::run_episode(g, b, m, ConstraintSet{}, 400).positions();
    const auto s = pick_states(g, route, 2, seed);
    CHECK(s.size() == 2);
    for (const Coord& c : s) {
      CHECK(std::find(route.begin(), route.end(), c) != route.end());
      CHECK(c != g.start());
      CHECK(g.at(c) == env::CellKind::kEmpty);
    }
    for (const Coord& t : g.treasures()) CHECK(env::bfs_oracle(g, g.start(), t, s).has_value());
  }
  const GridSpec tiny = env::from_text("ST\n", "tiny");
  CHECK(code_of([&] { pick_states(tiny, {{0, 0}, {0, 1}}, 1, 0); }) == ErrorCode::kAttackSetup);
  CHECK(code_of([&] { pick_sequence(tiny, {{0, 0}, {0, 1}}, 3, 0); }) == ErrorCode::kAttackSetup);
}
