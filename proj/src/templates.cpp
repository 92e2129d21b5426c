#include "agent_unlearn/templates.hpp"

#include <array>
#include <map>
#include <sstream>

#include "agent_unlearn/error.hpp"
#include "agent_unlearn/rng.hpp"

namespace au::unlearn {
namespace {

struct Family {
  Strategy strategy;
  std::array<double, 6> omission;
  std::array<const char*, 6> bodies;
};

// Bodies grow longer as they get noisier; the chattier a template, the more
// often its directive block comes out incomplete.
const Family kFamilies[] = {
    {Strategy::kNL,
     {0, 0, 0, 0, 0, 0},
     {"{goal}\n{directives}\n",
      "Please update your behavior in {env}. {goal}\nApply these rules:\n{directives}\n",
      "The user asked: \"{request}\"\n{goal}\nRules to follow from now on:\n{directives}\n",
      "You are receiving an unlearning request for {env}.\n{goal}\nThe following rules "
      "replace anything in memory that conflicts with them:\n{directives}\n",
      "Read carefully. Some of what you remember about {env} must be forgotten.\n{goal}\n"
      "Treat each rule below as a hard constraint on every action you choose:\n"
      "{directives}\nAll other behavior stays exactly as before.\n",
      "An operator has asked you to forget part of your experience.\nRequest: \"{request}\"\n"
      "{goal}\nConstraints (one per line, all mandatory):\n{directives}\n"
      "Keep solving every other task the way you did before; only the listed items are "
      "off limits.\n"}},
    {Strategy::kCode,
     {0, 0, 0, 0.05, 0.10, 0.15},
     {"# {goal}\nRULES = '''\n{directives}\n'''\n",
      "# env: {env}\n# {goal}\nconstraints = \"\"\"\n{directives}\n\"\"\"\nagent.apply(constraints)\n",
      "def unlearn(agent):\n    # {goal}\n    rules = \"\"\"\n    {directives}\n    \"\"\"\n"
      "    agent.constraints.extend(rules.split('\\n'))\n",
      "class UnlearnRequest:\n    env = '{env}'\n    # {goal}\n    directives = '''\n"
      "    {directives}\n    '''\n\n    def apply(self, agent):\n"
      "        agent.memory.erase(self.env)\n",
      "# Translated from the request: \"{request}\"\n# {goal}\nimport agent_runtime as rt\n\n"
      "def build_constraints():\n    text = '''\n    {directives}\n    '''\n"
      "    return [line.strip() for line in text.splitlines() if line.strip()]\n\n"
      "rt.current_agent().merge(build_constraints())\n",
      "\"\"\"Unlearning patch for {env}.\n\n{goal}\n\"\"\"\nfrom dataclasses import dataclass\n\n"
      "@dataclass\nclass Patch:\n    env: str = '{env}'\n    request: str = \"{request}\"\n\n"
      "    def directives(self):\n        return '''\n        {directives}\n        '''\n\n"
      "    def apply(self, agent):\n        for line in self.directives().splitlines():\n"
      "            if line.strip():\n                agent.constraints.add(line.strip())\n"
      "        agent.memory.scrub(self.env)\n"}},
    {Strategy::kExample,
     {0.10, 0.10, 0.10, 0.20, 0.30, 0.40},
     {"Example: forget cell 9,9 -> never enter 9,9.\nNow: {goal}\n{directives}\n",
      "Example request: \"forget room 4\"\nExample answer: avoid room 4 from now on.\n"
      "Your request: {goal}\n{directives}\n",
      "Here is how a similar request was handled before.\nQ: forget the corridor in maze-7\n"
      "A: the corridor is never entered again.\nQ: \"{request}\"\nA: {goal}\n{directives}\n",
      "Worked example 1: an agent was told to forget a doorway; afterwards it went around it.\n"
      "Worked example 2: an agent was told to forget a shortcut; it took the long way.\n"
      "Following these examples for {env}: {goal}\n{directives}\n",
      "Below are examples of unlearning instructions and the behavior they produce.\n"
      "- \"forget the kitchen\" -> the agent plans every route without the kitchen.\n"
      "- \"forget the stairs then hall route\" -> the agent may use either, never in that "
      "order.\n- \"forget house 3\" -> the agent no longer relies on anything from house 3.\n"
      "Apply the same pattern here.\nRequest: \"{request}\"\n{goal}\n{directives}\n",
      "You will see three solved examples, then the new case.\n"
      "Case A. Request: forget cell 0,1 of maze-2. Outcome: routes avoid 0,1; all goals "
      "still reached.\nCase B. Request: forget walking 3,3 then 3,4 in maze-5. Outcome: both "
      "cells still used, never consecutively.\nCase C. Request: forget maze-9. Outcome: "
      "behavior in maze-9 is no better than a newcomer's.\nNew case for {env}.\n"
      "Request: \"{request}\"\n{goal}\nDerived rules:\n{directives}\n"}},
};

std::string goal_text(Scenario s) {
  switch (s) {
    case Scenario::kState:
      return "Never step on {target} again; every other cell stays available.";
    case Scenario::kTrajectory:
      return "Never walk {target} in that order again; each cell on it may still be visited.";
    case Scenario::kEnvironment:
      return "Forget everything you learned in {target}; keep your skills everywhere else.";
  }
  return {};
}

std::string target_text(const UnlearnRequest& r) {
  std::ostringstream out;
  switch (r.scenario) {
    case Scenario::kState: {
      out << (r.states.size() == 1 ? "cell " : "cells ");
      std::size_t i = 0;
      for (const Coord& c : r.states) {
        if (i > 0) out << (i + 1 == r.states.size() ? " and " : ", ");
        out << env::to_string(c);
        ++i;
      }
      break;
    }
    case Scenario::kTrajectory:
      out << "the route ";
      for (std::size_t i = 0; i < r.trajectory.size(); ++i) {
        if (i > 0) out << " -> ";
        out << env::to_string(r.trajectory[i]);
      }
      break;
    case Scenario::kEnvironment:
      out << "environment " << r.env_id;
      break;
  }
  return out.str();
}

void replace_all(std::string& text, std::string_view key, const std::string& value) {
  for (std::size_t pos = text.find(key); pos != std::string::npos;
       pos = text.find(key, pos + value.size())) {
    text.replace(pos, key.size(), value);
  }
}

// Substitutes {directives} line-wise, repeating the placeholder's indentation
// on every directive line.
std::string expand_directives(const std::string& text, const std::vector<std::string>& lines) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t pos = line.find("{directives}");
    if (pos == std::string::npos) {
      out << line << '\n';
      continue;
    }
    const std::string indent = line.substr(0, pos);
    for (const auto& d : lines) out << indent << d << '\n';
  }
  return out.str();
}

std::vector<PromptTemplate> build_bank(Scenario scenario, Strategy strategy) {
  std::vector<PromptTemplate> bank;
  for (const Family& f : kFamilies) {
    if (f.strategy != strategy) continue;
    for (std::size_t k = 0; k < f.bodies.size(); ++k) {
      bank.push_back(PromptTemplate{to_string(scenario) + "/" + to_string(strategy) + "/" +
                                        std::to_string(k),
                                    scenario, strategy, f.bodies[k], f.omission[k]});
    }
  }
  return bank;
}

const std::map<std::pair<Scenario, Strategy>, std::vector<PromptTemplate>>& all_banks() {
  static const auto banks = [] {
    std::map<std::pair<Scenario, Strategy>, std::vector<PromptTemplate>> m;
    for (Scenario s : kScenarios) {
      for (Strategy t : kStrategies) m[{s, t}] = build_bank(s, t);
    }
    return m;
  }();
  return banks;
}

}  // namespace

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::kState: return "state";
    case Scenario::kTrajectory: return "trajectory";
    case Scenario::kEnvironment: return "environment";
  }
  return "?";
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kNL: return "nl";
    case Strategy::kCode: return "code";
    case Strategy::kExample: return "example";
  }
  return "?";
}

Scenario parse_scenario(std::string_view text) {
  for (Scenario s : kScenarios) {
    if (text == to_string(s)) return s;
  }
  fail(ErrorCode::kParse, "unknown scenario '" + std::string(text) + "'");
}

Strategy parse_strategy(std::string_view text) {
  for (Strategy s : kStrategies) {
    if (text == to_string(s)) return s;
  }
  fail(ErrorCode::kParse, "unknown strategy '" + std::string(text) + "'");
}

std::string to_string(SequenceMode m) {
  return m == SequenceMode::kFullSequence ? "full-sequence" : "per-edge";
}

SequenceMode parse_sequence_mode(std::string_view text) {
  if (text == "full-sequence") return SequenceMode::kFullSequence;
  if (text == "per-edge") return SequenceMode::kPerEdge;
  fail(ErrorCode::kParse, "unknown sequence mode '" + std::string(text) + "'");
}

UnlearnRequest make_state_request(std::string env_id, std::set<Coord> states, std::uint64_t seed) {
  UnlearnRequest r;
  r.scenario = Scenario::kState;
  r.states = std::move(states);
  r.env_id = std::move(env_id);
  r.seed = seed;
  r.request_text = "Please forget " + target_text(r) + " in " + r.env_id + ".";
  return r;
}

UnlearnRequest make_trajectory_request(std::string env_id, std::vector<Coord> trajectory,
                                       std::uint64_t seed) {
  UnlearnRequest r;
  r.scenario = Scenario::kTrajectory;
  r.trajectory = std::move(trajectory);
  r.env_id = std::move(env_id);
  r.seed = seed;
  r.request_text = "Please forget " + target_text(r) + " in " + r.env_id + ".";
  return r;
}

UnlearnRequest make_environment_request(std::string env_id, std::uint64_t seed) {
  UnlearnRequest r;
  r.scenario = Scenario::kEnvironment;
  r.env_id = std::move(env_id);
  r.seed = seed;
  r.request_text = "Please forget everything about " + r.env_id + ".";
  return r;
}

void validate(const UnlearnRequest& request) {
  if (request.env_id.empty()) fail(ErrorCode::kInvalidArgument, "request has no environment id");
  switch (request.scenario) {
    case Scenario::kState:
      if (request.states.empty()) fail(ErrorCode::kInvalidArgument, "state request names no states");
      break;
    case Scenario::kTrajectory:
      if (request.trajectory.size() < 2) {
        fail(ErrorCode::kInvalidArgument, "trajectory request needs at least two cells");
      }
      break;
    case Scenario::kEnvironment:
      break;
  }
}

std::vector<std::string> request_directive_lines(const UnlearnRequest& request, SequenceMode mode) {
  validate(request);
  std::vector<std::string> lines;
  switch (request.scenario) {
    case Scenario::kState:
      for (const Coord& c : request.states) lines.push_back(format_avoid_state(c));
      break;
    case Scenario::kTrajectory:
      if (mode == SequenceMode::kFullSequence) {
        lines.push_back(format_forbid_sequence(request.trajectory));
      } else {
        for (std::size_t i = 0; i + 1 < request.trajectory.size(); ++i) {
          lines.push_back(
              format_forbid_sequence({request.trajectory[i], request.trajectory[i + 1]}));
        }
      }
      break;
    case Scenario::kEnvironment:
      lines.push_back(format_forget_env(request.env_id));
      break;
  }
  return lines;
}

DirectiveSet request_directives(const UnlearnRequest& request, SequenceMode mode) {
  std::string text;
  for (const auto& line : request_directive_lines(request, mode)) text += line + "\n";
  return parse_directives(text);
}

const std::vector<PromptTemplate>& template_bank(Scenario scenario, Strategy strategy) {
  return all_banks().at({scenario, strategy});
}

const PromptTemplate& find_template(std::string_view id) {
  for (const auto& [key, bank] : all_banks()) {
    for (const auto& t : bank) {
      if (t.id == id) return t;
    }
  }
  fail(ErrorCode::kConfiguration, "no template with id '" + std::string(id) + "'");
}

bool omits_directive(const PromptTemplate& tpl, const UnlearnRequest& request, std::size_t index) {
  if (tpl.omission_probability <= 0.0) return false;
  Rng draw(mix_seed(request.seed, index));
  return draw.uniform01() < tpl.omission_probability;
}

double expected_completeness(const PromptTemplate& tpl) { return 1.0 - tpl.omission_probability; }

UnlearnPrompt render_prompt(const PromptTemplate& tpl, const UnlearnRequest& request,
                            SequenceMode mode) {
  if (tpl.scenario != request.scenario) {
    fail(ErrorCode::kConsistency, "template " + tpl.id + " is for " + to_string(tpl.scenario) +
                                      " requests, got " + to_string(request.scenario));
  }
  const auto all = request_directive_lines(request, mode);
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!omits_directive(tpl, request, i)) kept.push_back(all[i]);
  }
  std::string body = tpl.body;
  replace_all(body, "{goal}", goal_text(tpl.scenario));
  replace_all(body, "{target}", target_text(request));
  replace_all(body, "{env}", request.env_id);
  replace_all(body, "{request}", request.request_text);
  body = expand_directives(body, kept);

  UnlearnPrompt prompt;
  prompt.prompt_text = std::string(kPromptMarker) + "\n" + body;
  prompt.parsed = parse_directives(prompt.prompt_text);
  prompt.strategy = tpl.strategy;
  prompt.template_id = tpl.id;
  return prompt;
}

}  // namespace au::unlearn
