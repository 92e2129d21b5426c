#include "agent_unlearn/memory.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "agent_unlearn/error.hpp"
#include "agent_unlearn/grid_io.hpp"

namespace au::agent {

using nlohmann::json;

void MemoryStore::append(MemoryEntry entry) {
  auto& list = entries_[entry.env_id];
  list.push_back(std::move(entry));
}

std::span<const MemoryEntry> MemoryStore::entries(const std::string& env_id) const {
  const auto it = entries_.find(env_id);
  if (it == entries_.end()) return {};
  return it->second;
}

std::span<const MemoryEntry> MemoryStore::recent(const std::string& env_id, std::size_t k) const {
  const auto all = entries(env_id);
  if (all.size() <= k) return all;
  return all.subspan(all.size() - k);
}

std::size_t MemoryStore::size() const {
  std::size_t n = 0;
  for (const auto& [id, list] : entries_) n += list.size();
  return n;
}

std::vector<std::string> MemoryStore::env_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, list] : entries_) ids.push_back(id);
  return ids;
}

json MemoryStore::to_json() const {
  json doc = json::object();
  for (const auto& [id, list] : entries_) {
    json arr = json::array();
    for (const auto& e : list) {
      json collected = json::array();
      for (const Coord& c : e.state.collected) collected.push_back(env::coord_to_json(c));
      arr.push_back(json{{"state", env::coord_to_json(e.state.position)},
                         {"collected", std::move(collected)},
                         {"action", std::string(1, env::action_token(e.action))},
                         {"reward", e.reward}});
    }
    doc[id] = std::move(arr);
  }
  return doc;
}

MemoryStore MemoryStore::from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::kParse, "memory document must be a JSON object");
  MemoryStore store;
  try {
    for (const auto& [id, arr] : doc.items()) {
      auto& list = store.entries_[id];
      for (const json& item : arr) {
        MemoryEntry e;
        e.env_id = id;
        e.state.position = env::coord_from_json(item.at("state"));
        for (const json& c : item.at("collected")) e.state.collected.insert(env::coord_from_json(c));
        const auto token = item.at("action").get<std::string>();
        const auto action = token.size() == 1 ? env::parse_action_token(token[0]) : std::nullopt;
        if (!action) fail(ErrorCode::kParse, "unknown action '" + token + "' in memory");
        e.action = *action;
        e.reward = item.at("reward").get<double>();
        list.push_back(std::move(e));
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed memory document: ") + e.what());
  }
  return store;
}

void MemoryStore::save() const {
  if (file_path_.empty()) fail(ErrorCode::kIo, "memory store has no file path");
  std::ofstream out(file_path_, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + file_path_ + " for writing");
  out << to_json().dump(2) << '\n';
  if (!out) fail(ErrorCode::kIo, "write to " + file_path_ + " failed");
}

MemoryStore MemoryStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  json doc;
  try {
    doc = json::parse(buf.str());
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, "memory file " + path + " does not parse: " + e.what());
  }
  MemoryStore store = from_json(doc);
  store.file_path_ = path;
  return store;
}

namespace {

// Marks entries that take part in a contiguous run spelling `seq`.
std::vector<bool> mark_sequence_runs(const std::vector<MemoryEntry>& list,
                                     const std::vector<Coord>& seq) {
  std::vector<bool> hit(list.size(), false);
  if (seq.empty() || list.size() < seq.size()) return hit;
  for (std::size_t i = 0; i + seq.size() <= list.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < seq.size() && match; ++k) {
      match = list[i + k].state.position == seq[k];
    }
    if (match) std::fill(hit.begin() + static_cast<std::ptrdiff_t>(i),
                         hit.begin() + static_cast<std::ptrdiff_t>(i + seq.size()), true);
  }
  return hit;
}

std::size_t remove_marked(std::vector<MemoryEntry>& list, const std::vector<bool>& hit) {
  std::size_t removed = 0;
  std::vector<MemoryEntry> kept;
  kept.reserve(list.size());
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (hit[i]) {
      ++removed;
    } else {
      kept.push_back(std::move(list[i]));
    }
  }
  list = std::move(kept);
  return removed;
}

}  // namespace

std::size_t erase_memory(MemoryStore& memory, const MemorySelector& selector) {
  auto& all = memory.entries_;
  return std::visit(
      [&](const auto& sel) -> std::size_t {
        using T = std::decay_t<decltype(sel)>;
        const auto it = all.find(sel.env_id);
        if (it == all.end()) return 0;
        auto& list = it->second;
        std::size_t removed = 0;
        if constexpr (std::is_same_v<T, EnvSelector>) {
          removed = list.size();
        } else if constexpr (std::is_same_v<T, StateSelector>) {
          std::vector<bool> hit(list.size());
          for (std::size_t i = 0; i < list.size(); ++i) {
            hit[i] = sel.states.contains(list[i].state.position);
          }
          removed = remove_marked(list, hit);
        } else {
          for (;;) {
            const auto hit = mark_sequence_runs(list, sel.sequence);
            const auto n = remove_marked(list, hit);
            if (n == 0) break;
            removed += n;
          }
        }
        if (std::is_same_v<T, EnvSelector> || list.empty()) all.erase(it);
        return removed;
      },
      selector);
}

}  // namespace au::agent
