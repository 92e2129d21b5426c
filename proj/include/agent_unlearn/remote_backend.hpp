#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>

#include "agent_unlearn/policy.hpp"

namespace au::agent {

inline constexpr const char* kApiKeyVariable = "AGENT_UNLEARN_API_KEY";

struct RemoteConfig {
  std::string endpoint;  // full URL of an OpenAI-compatible chat completions route
  std::string model;
  std::chrono::milliseconds timeout{30000};
  std::size_t max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  double backoff_factor = 2.0;
  std::size_t max_in_flight = 4;

  void validate() const;
};

struct HttpReply {
  int status = 0;  // 0: no response at all
  std::string body;
  std::string error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpReply post(const std::string& body, const std::map<std::string, std::string>& headers) = 0;
};

// cpp-httplib client bound to one endpoint.
std::shared_ptr<Transport> make_http_transport(const RemoteConfig& config);

// Chat completions with retries, exponential backoff and a cap on requests in
// flight. The API key comes from AGENT_UNLEARN_API_KEY and nowhere else;
// construction throws kConfiguration when it is unset.
class ChatClient {
 public:
  ChatClient(RemoteConfig config, std::shared_ptr<Transport> transport);

  // Reply text of the first choice. Throws kTransport once retries run out
  // or the server refuses the request outright.
  std::string complete(const std::string& user_message);

  const RemoteConfig& config() const { return config_; }

 private:
  RemoteConfig config_;
  std::shared_ptr<Transport> transport_;
  std::string api_key_;
  std::counting_semaphore<256> slots_;
};

// First whitespace or punctuation separated token that is U, D, L or R,
// case-insensitive.
std::optional<Action> parse_reply(std::string_view text);

class RemoteBackend final : public PolicyBackend {
 public:
  explicit RemoteBackend(std::shared_ptr<ChatClient> client) : client_(std::move(client)) {}

  BackendKind kind() const override { return BackendKind::kRemote; }
  std::string identity() const override;
  // One reprompt on an unparseable reply, then kTransport.
  Action decide(const PromptContext& prompt, const GridSpec& spec) override;

 private:
  std::shared_ptr<ChatClient> client_;
};

}  // namespace au::agent
