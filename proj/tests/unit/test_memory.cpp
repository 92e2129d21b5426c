#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "agent_unlearn/error.hpp"
#include "agent_unlearn/memory.hpp"
#include "agent_unlearn/rng.hpp"

using namespace au;
using namespace au::agent;

namespace {

MemoryEntry entry(const std::string& env, Coord pos, Action a = Action::kRight, double r = -0.01) {
  return MemoryEntry{env, AgentState{pos, {}}, a, r};
}

MemoryStore random_store(Rng& rng, const std::string& env, std::size_t n, int span) {
  MemoryStore m;
  for (std::size_t i = 0; i < n; ++i) {
    m.append(entry(env, {static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(span))),
                         static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(span)))},
                   env::kActions[rng.uniform_index(4)]));
  }
  return m;
}

// Linear-scan oracle: does any contiguous run of positions spell `seq`?
bool scan_has_run(std::span<const MemoryEntry> list, const std::vector<Coord>& seq) {
  for (std::size_t i = 0; i + seq.size() <= list.size(); ++i) {
    bool ok = true;
    for (std::size_t k = 0; k < seq.size(); ++k) ok = ok && list[i + k].state.position == seq[k];
    if (ok) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("erase on an empty store removes nothing") {
  MemoryStore m;
  CHECK(erase_memory(m, StateSelector{"a", {{0, 0}}}) == 0);
  CHECK(erase_memory(m, SequenceSelector{"a", {{0, 0}, {0, 1}}}) == 0);
  CHECK(erase_memory(m, EnvSelector{"a"}) == 0);
}

TEST_CASE("environment erase is idempotent and leaves other envs alone") {
  MemoryStore m;
  for (int i = 0; i < 5; ++i) m.append(entry("a", {0, i}));
  for (int i = 0; i < 3; ++i) m.append(entry("b", {1, i}));
  CHECK(erase_memory(m, EnvSelector{"a"}) == 5);
  CHECK(erase_memory(m, EnvSelector{"a"}) == 0);
  CHECK(m.entries("a").empty());
  CHECK(m.entries("b").size() == 3);
}

TEST_CASE("state erase removes exactly the entries found by a linear scan") {
  Rng rng(40);
  MemoryStore m;
  const std::set<Coord> targets{{2, 2}, {4, 1}, {0, 3}};
  // 40 entries, three of them on target cells
  std::vector<Coord> cells;
  for (int i = 0; i < 37; ++i) cells.push_back({5 + static_cast<int>(rng.uniform_index(4)), static_cast<int>(rng.uniform_index(5))});
  cells.insert(cells.begin() + 4, {2, 2});
  cells.insert(cells.begin() + 17, {4, 1});
  cells.insert(cells.begin() + 30, {0, 3});
  for (const Coord& c : cells) m.append(entry("g", c));
  REQUIRE(m.size() == 40);
  std::size_t expected = 0;
  for (const auto& e : m.entries("g")) expected += targets.contains(e.state.position);
  CHECK(expected == 3);
  CHECK(erase_memory(m, StateSelector{"g", targets}) == 3);
  CHECK(m.size() == 37);
  for (const auto& e : m.entries("g")) CHECK_FALSE(targets.contains(e.state.position));
}

TEST_CASE("sequence erase reaches a fixpoint") {
  MemoryStore m;
  // a b a b c: removing the inner "a b" run would splice "a b" again
  for (Coord c : std::vector<Coord>{{0, 0}, {0, 0}, {0, 1}, {0, 1}, {9, 9}}) m.append(entry("g", c));
  const std::vector<Coord> seq{{0, 0}, {0, 1}};
  const auto removed = erase_memory(m, SequenceSelector{"g", seq});
  CHECK(removed == 4);
  CHECK_FALSE(scan_has_run(m.entries("g"), seq));
  CHECK(erase_memory(m, SequenceSelector{"g", seq}) == 0);
}

TEST_CASE("post-erasure emptiness holds for random stores and selectors") {
  Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    MemoryStore m = random_store(rng, "g", 60, 3);
    const std::size_t before = m.size();
    std::vector<Coord> seq;
    for (std::size_t i = 0; i < 2 + rng.uniform_index(2); ++i) {
      seq.push_back({static_cast<int>(rng.uniform_index(3)), static_cast<int>(rng.uniform_index(3))});
    }
    const auto removed = erase_memory(m, SequenceSelector{"g", seq});
    CHECK(m.size() + removed == before);
    CHECK_FALSE(scan_has_run(m.entries("g"), seq));
    std::set<Coord> states{{static_cast<int>(rng.uniform_index(3)), 0}};
    erase_memory(m, StateSelector{"g", states});
    for (const auto& e : m.entries("g")) CHECK_FALSE(states.contains(e.state.position));
  }
}

TEST_CASE("recent keeps the newest entries in order") {
  MemoryStore m;
  for (int i = 0; i < 60; ++i) m.append(entry("g", {i, 0}));
  const auto last = m.recent("g", 50);
  REQUIRE(last.size() == 50);
  CHECK(last.front().state.position == Coord{10, 0});
  CHECK(last.back().state.position == Coord{59, 0});
  CHECK(m.recent("none", 50).empty());
}

TEST_CASE("persist and load round-trip structurally") {
  Rng rng(42);
  MemoryStore m = random_store(rng, "grid-1", 25, 6);
  MemoryEntry rich{"grid-2", AgentState{{1, 2}, {{3, 4}, {0, 0}}}, Action::kDown, 0.99};
  m.append(rich);
  const auto path = std::filesystem::temp_directory_path() / "au_memory_roundtrip.json";
  m.set_file_path(path.string());
  m.save();
  const MemoryStore loaded = MemoryStore::load(path.string());
  CHECK(loaded == m);
  CHECK(loaded.entries("grid-2").front() == rich);
  CHECK(MemoryStore::from_json(m.to_json()) == m);
  std::filesystem::remove(path);
}

TEST_CASE("malformed memory documents are parse errors") {
  using nlohmann::json;
  CHECK_THROWS_AS(MemoryStore::from_json(json::array()), Error);
  CHECK_THROWS_AS(MemoryStore::from_json(json::parse(R"({"g":[{"state":[0,0]}]})")), Error);
  CHECK_THROWS_AS(
      MemoryStore::from_json(json::parse(
          R"({"g":[{"state":[0,0],"collected":[],"action":"X","reward":0}]})")),
      Error);
  CHECK_THROWS_AS(MemoryStore::load("/nonexistent/dir/memory.json"), Error);
}
