#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "agent_unlearn/gridworld.hpp"

namespace au {

using env::Coord;

// Behavioral directives carried by a prompt, not yet bound to an environment.
//
// Grammar (one directive per line, surrounding whitespace ignored):
//   AVOID-STATE r,c
//   FORBID-SEQUENCE (r,c)->(r,c)[->(r,c)...]
//   FORGET-ENV <id>
// Any other line is prose and is ignored.
struct DirectiveSet {
  std::set<Coord> avoid_states;
  std::vector<std::vector<Coord>> forbid_sequences;
  std::set<std::string> forget_envs;

  bool empty() const {
    return avoid_states.empty() && forbid_sequences.empty() && forget_envs.empty();
  }
  std::size_t size() const {
    return avoid_states.size() + forbid_sequences.size() + forget_envs.size();
  }

  friend bool operator==(const DirectiveSet&, const DirectiveSet&) = default;
};

// Total over arbitrary text. Throws kParse naming the line when a recognized
// directive keyword is followed by malformed coordinates.
DirectiveSet parse_directives(std::string_view prompt_text);

std::string format_avoid_state(const Coord& c);
std::string format_forbid_sequence(const std::vector<Coord>& seq);
std::string format_forget_env(const std::string& env_id);

// Canonical rendering: avoid-states sorted, then sequences in insertion
// order, then forgotten environments sorted; one line each, '\n'-terminated.
std::string serialize_directives(const DirectiveSet& directives);

// True when `sequence` occurs as a contiguous run of `positions`.
bool realizes_sequence(const std::vector<Coord>& positions, const std::vector<Coord>& sequence);

// Prefix automaton over positions: state k means the last k positions equal
// the first k cells of the sequence. Reaching size() means the sequence was
// just realized.
class SequenceMatcher {
 public:
  explicit SequenceMatcher(std::vector<Coord> sequence);

  std::size_t size() const { return sequence_.size(); }
  std::size_t advance(std::size_t state, Coord next) const;
  // State after consuming `positions` from the empty state, with a completed
  // match folded back to its longest proper border.
  std::size_t run(const std::vector<Coord>& positions) const;

 private:
  std::vector<Coord> sequence_;
  std::vector<std::size_t> border_;
};

// Per-environment behavioral constraints held by the agent. Empty by default;
// only the unlearning engine adds to it.
class ConstraintSet {
 public:
  void merge(const std::string& env_id, const DirectiveSet& delta);

  const std::set<Coord>& forbidden_states(const std::string& env_id) const;
  const std::vector<std::vector<Coord>>& forbidden_sequences(const std::string& env_id) const;
  bool is_degraded(const std::string& env_id) const { return degraded_envs_.contains(env_id); }
  const std::set<std::string>& degraded_envs() const { return degraded_envs_; }

  // The directives an agent working in `env_id` must see in its prompt.
  DirectiveSet directives_for(const std::string& env_id) const;

  bool empty() const;

  friend bool operator==(const ConstraintSet&, const ConstraintSet&) = default;

 private:
  std::map<std::string, std::set<Coord>> forbidden_states_;
  std::map<std::string, std::vector<std::vector<Coord>>> forbidden_sequences_;
  std::set<std::string> degraded_envs_;
};

}  // namespace au
