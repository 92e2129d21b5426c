#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "agent_unlearn/gridworld.hpp"

namespace au::agent {

using env::Action;
using env::AgentState;
using env::Coord;
using env::GridSpec;

struct MemoryEntry {
  std::string env_id;
  AgentState state;
  Action action = Action::kUp;
  double reward = 0.0;

  friend bool operator==(const MemoryEntry&, const MemoryEntry&) = default;
};

// Entries whose position lies in `states`.
struct StateSelector {
  std::string env_id;
  std::set<Coord> states;
};

// Entries taking part in a contiguous run whose positions spell `sequence`.
struct SequenceSelector {
  std::string env_id;
  std::vector<Coord> sequence;
};

// Every entry of the environment.
struct EnvSelector {
  std::string env_id;
};

using MemorySelector = std::variant<StateSelector, SequenceSelector, EnvSelector>;

// Agent memory Mem = {(s, a, r)} grouped by environment, persisted as a single
// JSON document:
//   {"<env_id>": [{"state":[r,c],"collected":[[r,c],...],"action":"U","reward":-0.01}, ...]}
class MemoryStore {
 public:
  MemoryStore() = default;
  explicit MemoryStore(std::string file_path) : file_path_(std::move(file_path)) {}

  void append(MemoryEntry entry);

  std::span<const MemoryEntry> entries(const std::string& env_id) const;
  // The last `k` entries recorded for `env_id`, oldest first.
  std::span<const MemoryEntry> recent(const std::string& env_id, std::size_t k) const;
  std::size_t size() const;
  std::vector<std::string> env_ids() const;

  const std::string& file_path() const { return file_path_; }
  void set_file_path(std::string path) { file_path_ = std::move(path); }

  nlohmann::json to_json() const;
  static MemoryStore from_json(const nlohmann::json& doc);

  // Writes to file_path(); throws kIo on failure.
  void save() const;
  static MemoryStore load(const std::string& path);

  friend bool operator==(const MemoryStore& a, const MemoryStore& b) {
    return a.entries_ == b.entries_;
  }

 private:
  friend std::size_t erase_memory(MemoryStore&, const MemorySelector&);

  std::map<std::string, std::vector<MemoryEntry>> entries_;
  std::string file_path_;
};

// Removes every entry matching `selector` and returns how many were removed.
// Sequence erasure repeats until no contiguous match survives, since removing
// a run can splice a new one together. Idempotent.
std::size_t erase_memory(MemoryStore& memory, const MemorySelector& selector);

}  // namespace au::agent
