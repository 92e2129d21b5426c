#include "agent_unlearn/remote_backend.hpp"

#include <cctype>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "agent_unlearn/error.hpp"

namespace au::agent {
namespace {

constexpr const char* kSystemMessage =
    "You control an agent in a grid world. Read the task, state, memory and "
    "constraints, then answer with exactly one move: U, D, L or R.";
constexpr const char* kReprompt = "\n\nAnswer with a single letter: U, D, L or R.";

class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(const RemoteConfig& config) : timeout_(config.timeout) {
    const std::string& url = config.endpoint;
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) fail(ErrorCode::kConfiguration, "endpoint needs a scheme: " + url);
    const auto slash = url.find('/', scheme + 3);
    origin_ = url.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : url.substr(slash);
    if (!httplib::Client(origin_).is_valid()) fail(ErrorCode::kConfiguration, "unsupported endpoint " + url);
  }

  // One client per request; requests run concurrently.
  HttpReply post(const std::string& body, const std::map<std::string, std::string>& headers) override {
    httplib::Client client(origin_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers h(headers.begin(), headers.end());
    auto res = client.Post(path_, h, body, "application/json");
    if (!res) return HttpReply{0, "", httplib::to_string(res.error())};
    return HttpReply{res->status, res->body, ""};
  }

 private:
  std::string origin_;
  std::string path_;
  std::chrono::milliseconds timeout_;
};

bool retryable(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

}  // namespace

void RemoteConfig::validate() const {
  if (endpoint.empty()) fail(ErrorCode::kConfiguration, "remote backend needs an endpoint");
  if (model.empty()) fail(ErrorCode::kConfiguration, "remote backend needs a model name");
  if (max_in_flight < 1 || max_in_flight > 256) {
    fail(ErrorCode::kConfiguration, "max_in_flight must be between 1 and 256");
  }
  if (!(backoff_factor >= 1.0)) fail(ErrorCode::kConfiguration, "backoff_factor must be >= 1");
}

std::shared_ptr<Transport> make_http_transport(const RemoteConfig& config) {
  config.validate();
  return std::make_shared<HttpTransport>(config);
}

ChatClient::ChatClient(RemoteConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      slots_(static_cast<std::ptrdiff_t>(config_.max_in_flight)) {
  config_.validate();
  if (!transport_) fail(ErrorCode::kConfiguration, "remote backend has no transport");
  const char* key = std::getenv(kApiKeyVariable);
  if (!key || !*key) fail(ErrorCode::kConfiguration, std::string(kApiKeyVariable) + " is not set");
  api_key_ = key;
}

std::string ChatClient::complete(const std::string& user_message) {
  const nlohmann::json request{
      {"model", config_.model},
      {"temperature", 0},
      {"messages",
       {{{"role", "system"}, {"content", kSystemMessage}}, {{"role", "user"}, {"content", user_message}}}}};
  const std::string body = request.dump();
  const std::map<std::string, std::string> headers{{"Authorization", "Bearer " + api_key_}};

  auto delay = config_.initial_backoff;
  std::string last;
  for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(delay.count()) * config_.backoff_factor));
    }
    HttpReply reply;
    slots_.acquire();
    try {
      reply = transport_->post(body, headers);
    } catch (...) {
      slots_.release();
      throw;
    }
    slots_.release();

    if (reply.status == 200) {
      try {
        const auto doc = nlohmann::json::parse(reply.body);
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kTransport, std::string("malformed chat completion: ") + e.what());
      }
    }
    last = reply.status == 0 ? "no response (" + reply.error + ")"
                             : "HTTP " + std::to_string(reply.status);
    if (!retryable(reply.status)) break;
  }
  fail(ErrorCode::kTransport, "chat completion failed: " + last);
}

std::optional<Action> parse_reply(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && std::isalnum(static_cast<unsigned char>(text[j]))) ++j;
    if (j == i + 1) {
      const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(text[i])));
      if (auto a = env::parse_action_token(c)) return a;
    }
    i = j;
  }
  return std::nullopt;
}

std::string RemoteBackend::identity() const {
  return "remote(model=" + client_->config().model + ", endpoint=" + client_->config().endpoint + ")";
}

Action RemoteBackend::decide(const PromptContext& prompt, const GridSpec&) {
  const std::string text = prompt.render();
  const std::string first = client_->complete(text);
  if (auto a = parse_reply(first)) return *a;
  const std::string second = client_->complete(text + kReprompt);
  if (auto a = parse_reply(second)) return *a;
  fail(ErrorCode::kTransport, "model reply has no move: '" + second.substr(0, 80) + "'");
}

}  // namespace au::agent
