#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <deque>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "agent_unlearn/error.hpp"
#include "agent_unlearn/episode.hpp"
#include "agent_unlearn/grid_io.hpp"
#include "agent_unlearn/remote_backend.hpp"

using namespace au;
using namespace au::agent;
using env::Action;

namespace {

std::string completion(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}
      .dump();
}

// Loopback chat-completions server that plays back a script of replies.
class MockServer {
 public:
  struct Step {
    int status;
    std::string body;
  };

  explicit MockServer(std::deque<Step> script, std::chrono::milliseconds delay = {})
      : script_(std::move(script)), delay_(delay) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int now = ++in_flight_;
      int seen = peak_.load();
      while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
      }
      if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
      Step step{200, completion("U")};
      {
        std::lock_guard lock(mutex_);
        requests_.push_back(req.body);
        auth_.push_back(req.get_header_value("Authorization"));
        if (!script_.empty()) {
          step = script_.front();
          script_.pop_front();
        }
      }
      --in_flight_;
      res.status = step.status;
      res.set_content(step.body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  std::vector<std::string> requests() {
    std::lock_guard lock(mutex_);
    return requests_;
  }
  std::vector<std::string> auth() {
    std::lock_guard lock(mutex_);
    return auth_;
  }
  int peak() const { return peak_.load(); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mutex_;
  std::deque<Step> script_;
  std::vector<std::string> requests_;
  std::vector<std::string> auth_;
  std::chrono::milliseconds delay_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
};

RemoteConfig config_for(const MockServer& s) {
  RemoteConfig c;
  c.endpoint = s.url();
  c.model = "test-model";
  c.initial_backoff = std::chrono::milliseconds(1);
  c.timeout = std::chrono::milliseconds(5000);
  return c;
}

struct KeyGuard {
  explicit KeyGuard(const char* value) {
    if (value) {
      ::setenv(kApiKeyVariable, value, 1);
    } else {
      ::unsetenv(kApiKeyVariable);
    }
  }
  ~KeyGuard() { ::unsetenv(kApiKeyVariable); }
};

PromptContext sample_prompt() {
  return PromptContext{"reach 1,1", "env g\nposition 0,0\ncollected none\ntrail none\n", "", ""};
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("reply parsing takes the first move token") {
  CHECK(parse_reply("R") == Action::kRight);
  CHECK(parse_reply("  d\n") == Action::kDown);
  CHECK(parse_reply("I would go L, then U") == Action::kLeft);
  CHECK(parse_reply("Move: u.") == Action::kUp);
  CHECK_FALSE(parse_reply("Right").has_value());
  CHECK_FALSE(parse_reply("").has_value());
  CHECK_FALSE(parse_reply("X Y Z").has_value());
}

TEST_CASE("missing api key is a configuration error") {
  KeyGuard key(nullptr);
  MockServer server({});
  CHECK(code_of([&] { ChatClient(config_for(server), make_http_transport(config_for(server))); }) ==
        ErrorCode::kConfiguration);
}

TEST_CASE("remote config needs endpoint and model") {
  RemoteConfig c;
  c.model = "m";
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfiguration);
  c.endpoint = "http://127.0.0.1:1/x";
  c.model = "";
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfiguration);
}

TEST_CASE("request carries model, zero temperature, prompt and key") {
  KeyGuard key("sk-test");
  MockServer server({{200, completion("R")}});
  const auto cfg = config_for(server);
  RemoteBackend backend(std::make_shared<ChatClient>(cfg, make_http_transport(cfg)));
  const auto grid = env::generate(1, 4, 4, 2, 1);
  CHECK(backend.decide(sample_prompt(), grid) == Action::kRight);
  const auto reqs = server.requests();
  REQUIRE(reqs.size() == 1);
  const auto doc = nlohmann::json::parse(reqs[0]);
  CHECK(doc.at("model") == "test-model");
  CHECK(doc.at("temperature") == 0);
  CHECK(doc.at("messages").back().at("role") == "user");
  CHECK(doc.at("messages").back().at("content") == sample_prompt().render());
  CHECK(server.auth().at(0) == "Bearer sk-test");
  CHECK(backend.kind() == BackendKind::kRemote);
}

TEST_CASE("unparseable reply gets one reprompt") {
  KeyGuard key("k");
  MockServer server({{200, completion("I am not sure")}, {200, completion("L")}});
  const auto cfg = config_for(server);
  RemoteBackend backend(std::make_shared<ChatClient>(cfg, make_http_transport(cfg)));
  CHECK(backend.decide(sample_prompt(), env::generate(1, 4, 4, 2, 1)) == Action::kLeft);
  CHECK(server.requests().size() == 2);
}

TEST_CASE("two unparseable replies are a transport error") {
  KeyGuard key("k");
  MockServer server({{200, completion("hmm")}, {200, completion("still no")}});
  const auto cfg = config_for(server);
  RemoteBackend backend(std::make_shared<ChatClient>(cfg, make_http_transport(cfg)));
  CHECK(code_of([&] { backend.decide(sample_prompt(), env::generate(1, 4, 4, 2, 1)); }) ==
        ErrorCode::kTransport);
}

TEST_CASE("server errors are retried with backoff") {
  KeyGuard key("k");
  MockServer server({{500, "{}"}, {429, "{}"}, {200, completion("D")}});
  const auto cfg = config_for(server);
  ChatClient client(cfg, make_http_transport(cfg));
  CHECK(client.complete("hi") == "D");
  CHECK(server.requests().size() == 3);
}

TEST_CASE("retries run out after three") {
  KeyGuard key("k");
  MockServer server({{503, "{}"}, {503, "{}"}, {503, "{}"}, {503, "{}"}, {200, completion("U")}});
  const auto cfg = config_for(server);
  ChatClient client(cfg, make_http_transport(cfg));
  CHECK(code_of([&] { client.complete("hi"); }) == ErrorCode::kTransport);
  CHECK(server.requests().size() == 4);
}

TEST_CASE("client errors are not retried") {
  KeyGuard key("k");
  MockServer server({{401, "{}"}});
  const auto cfg = config_for(server);
  ChatClient client(cfg, make_http_transport(cfg));
  CHECK(code_of([&] { client.complete("hi"); }) == ErrorCode::kTransport);
  CHECK(server.requests().size() == 1);
}

TEST_CASE("unreachable endpoint is a transport error") {
  KeyGuard key("k");
  RemoteConfig cfg;
  cfg.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  cfg.model = "m";
  cfg.max_retries = 1;
  cfg.initial_backoff = std::chrono::milliseconds(1);
  cfg.timeout = std::chrono::milliseconds(500);
  ChatClient client(cfg, make_http_transport(cfg));
  CHECK(code_of([&] { client.complete("hi"); }) == ErrorCode::kTransport);
}

TEST_CASE("no more than max_in_flight requests at once") {
  KeyGuard key("k");
  MockServer server({}, std::chrono::milliseconds(30));
  auto cfg = config_for(server);
  cfg.max_in_flight = 2;
  auto client = std::make_shared<ChatClient>(cfg, make_http_transport(cfg));
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&] { client->complete("hi"); });
  for (auto& t : threads) t.join();
  CHECK(server.requests().size() == 8);
  CHECK(server.peak() <= 2);
  CHECK(server.peak() >= 1);
}

TEST_CASE("episode aborts on transport failure and keeps memory") {
  KeyGuard key("k");
  MockServer server({{200, completion("R")}, {401, "{}"}});
  const auto cfg = config_for(server);
  RemoteBackend backend(std::make_shared<ChatClient>(cfg, make_http_transport(cfg)));
  const auto grid = env::from_text("S...\n...T\n", "remote");
  MemoryStore memory;
  CHECK(code_of([&] { run_episode(grid, backend, memory, ConstraintSet{}, 10); }) ==
        ErrorCode::kTransport);
  // Only the step that got an answer was recorded.
  CHECK(memory.entries("remote").size() == 1);
}
