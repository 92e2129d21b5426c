#include "agent_unlearn/constraints.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>

#include "agent_unlearn/error.hpp"

namespace au {
namespace {

constexpr std::string_view kAvoidState = "AVOID-STATE";
constexpr std::string_view kForbidSequence = "FORBID-SEQUENCE";
constexpr std::string_view kForgetEnv = "FORGET-ENV";

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Keyword must be followed by whitespace or end of line to count.
std::optional<std::string_view> strip_keyword(std::string_view line, std::string_view keyword) {
  if (!line.starts_with(keyword)) return std::nullopt;
  std::string_view rest = line.substr(keyword.size());
  if (!rest.empty() && !std::isspace(static_cast<unsigned char>(rest.front()))) return std::nullopt;
  return trim(rest);
}

std::optional<int> parse_int(std::string_view s) {
  s = trim(s);
  int value = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return value;
}

std::optional<Coord> parse_pair(std::string_view s) {
  const auto comma = s.find(',');
  if (comma == std::string_view::npos) return std::nullopt;
  const auto r = parse_int(s.substr(0, comma));
  const auto c = parse_int(s.substr(comma + 1));
  if (!r || !c) return std::nullopt;
  return Coord{*r, *c};
}

std::optional<std::vector<Coord>> parse_sequence(std::string_view s) {
  std::vector<Coord> seq;
  for (;;) {
    s = trim(s);
    if (s.empty() || s.front() != '(') return std::nullopt;
    const auto close = s.find(')');
    if (close == std::string_view::npos) return std::nullopt;
    const auto cell = parse_pair(s.substr(1, close - 1));
    if (!cell) return std::nullopt;
    seq.push_back(*cell);
    s = trim(s.substr(close + 1));
    if (s.empty()) break;
    if (!s.starts_with("->")) return std::nullopt;
    s.remove_prefix(2);
  }
  if (seq.size() < 2) return std::nullopt;
  return seq;
}

[[noreturn]] void malformed(std::size_t line_no, std::string_view line) {
  fail(ErrorCode::kParse,
       "malformed directive on line " + std::to_string(line_no) + ": '" + std::string(line) + "'");
}

}  // namespace

DirectiveSet parse_directives(std::string_view text) {
  DirectiveSet out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    const std::string_view raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    const std::string_view line = trim(raw);

    if (auto rest = strip_keyword(line, kAvoidState)) {
      const auto cell = parse_pair(*rest);
      if (!cell) malformed(line_no, line);
      out.avoid_states.insert(*cell);
    } else if (auto rest = strip_keyword(line, kForbidSequence)) {
      auto seq = parse_sequence(*rest);
      if (!seq) malformed(line_no, line);
      if (std::find(out.forbid_sequences.begin(), out.forbid_sequences.end(), *seq) ==
          out.forbid_sequences.end()) {
        out.forbid_sequences.push_back(std::move(*seq));
      }
    } else if (auto rest = strip_keyword(line, kForgetEnv)) {
      if (rest->empty() || rest->find_first_of(" \t") != std::string_view::npos) {
        malformed(line_no, line);
      }
      out.forget_envs.insert(std::string(*rest));
    }
  }
  return out;
}

std::string format_avoid_state(const Coord& c) {
  return std::string(kAvoidState) + " " + env::to_string(c);
}

std::string format_forbid_sequence(const std::vector<Coord>& seq) {
  std::string line(kForbidSequence);
  line.push_back(' ');
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i > 0) line += "->";
    line += "(" + env::to_string(seq[i]) + ")";
  }
  return line;
}

std::string format_forget_env(const std::string& env_id) {
  return std::string(kForgetEnv) + " " + env_id;
}

std::string serialize_directives(const DirectiveSet& d) {
  std::string out;
  for (const Coord& c : d.avoid_states) out += format_avoid_state(c) + "\n";
  for (const auto& seq : d.forbid_sequences) out += format_forbid_sequence(seq) + "\n";
  for (const auto& id : d.forget_envs) out += format_forget_env(id) + "\n";
  return out;
}

bool realizes_sequence(const std::vector<Coord>& positions, const std::vector<Coord>& sequence) {
  if (sequence.empty()) return true;
  return std::search(positions.begin(), positions.end(), sequence.begin(), sequence.end()) !=
         positions.end();
}

SequenceMatcher::SequenceMatcher(std::vector<Coord> sequence)
    : sequence_(std::move(sequence)), border_(sequence_.size() + 1, 0) {
  if (sequence_.empty()) fail(ErrorCode::kInvalidArgument, "empty forbidden sequence");
  for (std::size_t i = 1; i < sequence_.size(); ++i) {
    std::size_t k = border_[i];
    while (k > 0 && !(sequence_[i] == sequence_[k])) k = border_[k];
    if (sequence_[i] == sequence_[k]) ++k;
    border_[i + 1] = k;
  }
}

std::size_t SequenceMatcher::advance(std::size_t state, Coord next) const {
  if (state == sequence_.size()) state = border_[state];
  while (state > 0 && !(sequence_[state] == next)) state = border_[state];
  if (sequence_[state] == next) ++state;
  return state;
}

std::size_t SequenceMatcher::run(const std::vector<Coord>& positions) const {
  std::size_t state = 0;
  for (const Coord& c : positions) state = advance(state, c);
  return state == sequence_.size() ? border_[state] : state;
}

void ConstraintSet::merge(const std::string& env_id, const DirectiveSet& delta) {
  if (!delta.avoid_states.empty()) {
    forbidden_states_[env_id].insert(delta.avoid_states.begin(), delta.avoid_states.end());
  }
  if (!delta.forbid_sequences.empty()) {
    auto& seqs = forbidden_sequences_[env_id];
    for (const auto& seq : delta.forbid_sequences) {
      if (std::find(seqs.begin(), seqs.end(), seq) == seqs.end()) seqs.push_back(seq);
    }
  }
  degraded_envs_.insert(delta.forget_envs.begin(), delta.forget_envs.end());
}

const std::set<Coord>& ConstraintSet::forbidden_states(const std::string& env_id) const {
  static const std::set<Coord> kNone;
  const auto it = forbidden_states_.find(env_id);
  return it == forbidden_states_.end() ? kNone : it->second;
}

const std::vector<std::vector<Coord>>& ConstraintSet::forbidden_sequences(
    const std::string& env_id) const {
  static const std::vector<std::vector<Coord>> kNone;
  const auto it = forbidden_sequences_.find(env_id);
  return it == forbidden_sequences_.end() ? kNone : it->second;
}

DirectiveSet ConstraintSet::directives_for(const std::string& env_id) const {
  DirectiveSet d;
  d.avoid_states = forbidden_states(env_id);
  d.forbid_sequences = forbidden_sequences(env_id);
  if (is_degraded(env_id)) d.forget_envs.insert(env_id);
  return d;
}

bool ConstraintSet::empty() const {
  return forbidden_states_.empty() && forbidden_sequences_.empty() && degraded_envs_.empty();
}

}  // namespace au
