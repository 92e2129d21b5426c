#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "agent_unlearn/gridworld.hpp"
#include "agent_unlearn/prompt.hpp"
#include "agent_unlearn/rng.hpp"

namespace au::agent {

enum class BackendKind { kScripted, kRemote };

// The policy pi. Implementations read only the prompt (plus the grid, which
// stands in for what the agent perceives) and never learn.
class PolicyBackend {
 public:
  virtual ~PolicyBackend() = default;

  virtual BackendKind kind() const = 0;
  virtual std::string identity() const = 0;
  virtual Action decide(const PromptContext& prompt, const GridSpec& spec) = 0;
};

// Deterministic stand-in for the language model. Plans to the nearest
// uncollected treasure (or the task goal) with breadth-first search over
// cells crossed with the progress made on each forbidden sequence, so it can
// never enter an avoided cell nor complete a forbidden sequence. In a
// forgotten environment it walks uniformly at random from its seeded stream.
class ScriptedBackend final : public PolicyBackend {
 public:
  explicit ScriptedBackend(std::uint64_t seed = 0) : seed_(seed), stream_(seed) {}

  BackendKind kind() const override { return BackendKind::kScripted; }
  std::string identity() const override;
  Action decide(const PromptContext& prompt, const GridSpec& spec) override;

  void reseed(std::uint64_t seed) {
    seed_ = seed;
    stream_ = Rng(seed);
  }

 private:
  std::uint64_t seed_;
  Rng stream_;
};

// The scripted decision rule; `stream` is consumed only in forgotten
// environments.
Action scripted_decide(const PromptContext& prompt, const GridSpec& spec, Rng& stream);

}  // namespace au::agent
