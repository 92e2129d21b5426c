#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "agent_unlearn/constraints.hpp"
#include "agent_unlearn/gridworld.hpp"

namespace au::unlearn {

using env::Coord;

enum class Scenario { kState, kTrajectory, kEnvironment };
enum class Strategy { kNL, kCode, kExample };

inline constexpr Scenario kScenarios[] = {Scenario::kState, Scenario::kTrajectory,
                                          Scenario::kEnvironment};
inline constexpr Strategy kStrategies[] = {Strategy::kNL, Strategy::kCode, Strategy::kExample};

std::string to_string(Scenario s);  // "state", "trajectory", "environment"
std::string to_string(Strategy s);  // "nl", "code", "example"
Scenario parse_scenario(std::string_view text);
Strategy parse_strategy(std::string_view text);

// How a trajectory request is turned into directives: forbid the whole
// ordered run, or forbid each consecutive step of it.
enum class SequenceMode { kFullSequence, kPerEdge };
std::string to_string(SequenceMode m);
SequenceMode parse_sequence_mode(std::string_view text);

inline constexpr std::string_view kPromptMarker = "Unlearning Instruction:";
inline constexpr int kBankVersion = 1;

struct UnlearnRequest {
  Scenario scenario = Scenario::kState;
  std::set<Coord> states;         // S_u
  std::vector<Coord> trajectory;  // tau
  std::string env_id;
  std::string request_text;
  std::uint64_t seed = 0;  // identifies this request's wording for the prompt generator
};

UnlearnRequest make_state_request(std::string env_id, std::set<Coord> states, std::uint64_t seed);
UnlearnRequest make_trajectory_request(std::string env_id, std::vector<Coord> trajectory,
                                       std::uint64_t seed);
UnlearnRequest make_environment_request(std::string env_id, std::uint64_t seed);

// Throws kInvalidArgument unless S_u is nonempty / tau has two or more cells /
// the environment id is set.
void validate(const UnlearnRequest& request);

// The full directive payload that realizes the request.
std::vector<std::string> request_directive_lines(const UnlearnRequest& request, SequenceMode mode);
DirectiveSet request_directives(const UnlearnRequest& request, SequenceMode mode);

struct PromptTemplate {
  std::string id;  // "<scenario>/<strategy>/<k>"
  Scenario scenario;
  Strategy strategy;
  std::string body;  // placeholders {env}, {target}, {directives}
  double omission_probability = 0.0;
};

// Six templates per (scenario, strategy). Natural-language templates always
// carry every directive; code and example templates drop directives at
// template-specific rates averaging 0.05 and 0.2.
const std::vector<PromptTemplate>& template_bank(Scenario scenario, Strategy strategy);
const PromptTemplate& find_template(std::string_view id);

// Whether the prompt built from `tpl` for `request` drops directive `index`.
// Each request directive carries one uniform draw from the request's seeded
// stream; a template drops the directive when the draw falls below its
// omission probability. A directive a reliable template drops is therefore
// dropped by every noisier template too.
bool omits_directive(const PromptTemplate& tpl, const UnlearnRequest& request, std::size_t index);

// Fraction of directives the template is expected to keep.
double expected_completeness(const PromptTemplate& tpl);

struct UnlearnPrompt {
  std::string prompt_text;
  DirectiveSet parsed;
  Strategy strategy = Strategy::kNL;
  std::string template_id;
};

UnlearnPrompt render_prompt(const PromptTemplate& tpl, const UnlearnRequest& request,
                            SequenceMode mode = SequenceMode::kFullSequence);

}  // namespace au::unlearn
