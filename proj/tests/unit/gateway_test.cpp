#include <gtest/gtest.h>

#include <atomic>
#include <deque>
#include <thread>

#include "chartinstruct/error.hpp"
#include "chartinstruct/gateway.hpp"
#include "test_support.hpp"

using namespace chartinstruct;
using namespace chartinstruct::gateway;
using namespace std::chrono_literals;

namespace {

std::string ok_body(const std::string& text) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}},
                        {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 3}}}}
      .dump();
}

// Plays back a fixed list of results, then repeats the last one.
class ScriptedTransport final : public Transport {
 public:
  explicit ScriptedTransport(std::deque<HttpResult> script) : script_(std::move(script)) {}

  HttpResult post(const std::string& url, const std::map<std::string, std::string>& headers, const std::string& body,
                  std::chrono::milliseconds) override {
    std::lock_guard lock(mu_);
    ++calls;
    last_url = url;
    last_headers = headers;
    last_body = body;
    if (script_.size() > 1) {
      auto r = script_.front();
      script_.pop_front();
      return r;
    }
    return script_.front();
  }

  int calls = 0;
  std::string last_url;
  std::map<std::string, std::string> last_headers;
  std::string last_body;

 private:
  std::deque<HttpResult> script_;
  std::mutex mu_;
};

ProviderConfig provider(int attempts = 3) {
  ProviderConfig cfg;
  cfg.endpoints[ModelTier::Standard] = {"http://llm.invalid/v1/chat/completions", "TEST_TOKEN", "std-model"};
  cfg.endpoints[ModelTier::Advanced] = {"http://llm.invalid/v1/chat/completions", "TEST_TOKEN", "adv-model"};
  cfg.retry.max_attempts = attempts;
  cfg.retry.backoff_base = 10ms;
  return cfg;
}

std::shared_ptr<ChatClient> client_for(std::shared_ptr<Transport> t, int attempts, std::vector<long>* sleeps = nullptr) {
  auto c = std::make_shared<ChatClient>(provider(attempts), std::move(t));
  c->set_env_lookup([](const std::string& n) -> std::optional<std::string> {
    if (n == "TEST_TOKEN") return std::string("secret");
    return std::nullopt;
  });
  c->set_sleeper([sleeps](std::chrono::milliseconds d) {
    if (sleeps) sleeps->push_back(static_cast<long>(d.count()));
  });
  return c;
}

const ChatRequest kReq{ModelTier::Standard, "Describe the chart."};

}  // namespace

TEST(Fingerprint, KnownDigest) {
  // SHA-256 of the single byte 0x00.
  EXPECT_EQ(fingerprint(ModelTier::Standard, ""), "6e340b9cffb37a989ca544e6bb780a2c78901d3fb33738768511a30617afa01d");
}

TEST(Fingerprint, TierAndPromptMatter) {
  EXPECT_EQ(fingerprint(ModelTier::Standard, "p"), fingerprint(ModelTier::Standard, "p"));
  EXPECT_NE(fingerprint(ModelTier::Standard, "p"), fingerprint(ModelTier::Advanced, "p"));
  EXPECT_NE(fingerprint(ModelTier::Standard, "p"), fingerprint(ModelTier::Standard, "q"));
  EXPECT_EQ(fingerprint(ModelTier::Advanced, "p").size(), 64u);
}

TEST(Wire, RequestBody) {
  const auto body = nlohmann::json::parse(build_request_body({"u", "E", "m1"}, "hello", 0.2));
  EXPECT_EQ(body["model"], "m1");
  EXPECT_EQ(body["messages"][0]["role"], "user");
  EXPECT_EQ(body["messages"][0]["content"], "hello");
  EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.2);
  EXPECT_FALSE(nlohmann::json::parse(build_request_body({"u", "E", "m1"}, "x", std::nullopt)).contains("temperature"));
}

TEST(Wire, ResponseBody) {
  const auto r = parse_response_body(ok_body("ok"));
  EXPECT_EQ(r.text, "ok");
  EXPECT_EQ(r.usage, (TokenUsage{11, 3}));
  EXPECT_EQ(parse_response_body(R"({"choices":[{"text":"legacy"}]})").text, "legacy");
  for (const char* bad : {"", "[]", "{}", R"({"choices":[]})", R"({"choices":[{"message":{}}]})"}) {
    try {
      parse_response_body(bad);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::NotJson);
    }
  }
}

TEST(Client, PassthroughAndHeaders) {
  auto t = std::make_shared<ScriptedTransport>(std::deque<HttpResult>{{200, ok_body("ok"), ""}});
  auto c = client_for(t, 3);
  const auto r = c->complete(kReq);
  EXPECT_EQ(r.text, "ok");
  EXPECT_EQ(r.fingerprint, fingerprint(kReq.tier, kReq.prompt));
  EXPECT_EQ(t->last_headers.at("Authorization"), "Bearer secret");
  EXPECT_EQ(nlohmann::json::parse(t->last_body)["model"], "std-model");
}

TEST(Client, RetriesTransientThenSucceeds) {
  std::vector<long> sleeps;
  auto t = std::make_shared<ScriptedTransport>(
      std::deque<HttpResult>{{503, "busy", ""}, {0, "", "timeout"}, {200, ok_body("third"), ""}});
  auto c = client_for(t, 3, &sleeps);
  EXPECT_EQ(c->complete(kReq).text, "third");
  EXPECT_EQ(t->calls, 3);
  EXPECT_EQ(c->attempts_made(), 3);
  EXPECT_EQ(sleeps, (std::vector<long>{10, 20}));
}

TEST(Client, RateLimitIsTransient) {
  auto t = std::make_shared<ScriptedTransport>(std::deque<HttpResult>{{429, "", ""}, {200, ok_body("ok"), ""}});
  EXPECT_EQ(client_for(t, 2)->complete(kReq).text, "ok");
}

TEST(Client, AlwaysFailingIsExhausted) {
  auto t = std::make_shared<ScriptedTransport>(std::deque<HttpResult>{{500, "boom", ""}});
  auto c = client_for(t, 2);
  try {
    c->complete(kReq);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Exhausted);
    EXPECT_NE(std::string(e.what()).find("HTTP 500"), std::string::npos);
  }
  EXPECT_EQ(t->calls, 2);
}

TEST(Client, ClientErrorsAreNotRetried) {
  auto t = std::make_shared<ScriptedTransport>(std::deque<HttpResult>{{400, "bad request", ""}});
  EXPECT_THROW(client_for(t, 5)->complete(kReq), Error);
  EXPECT_EQ(t->calls, 1);
}

TEST(Client, MissingTokenIsAuthMissing) {
  auto t = std::make_shared<ScriptedTransport>(std::deque<HttpResult>{{200, ok_body("ok"), ""}});
  ChatClient c(provider(), t);
  c.set_env_lookup([](const std::string&) { return std::nullopt; });
  try {
    c.complete(kReq);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AuthMissing);
  }
  EXPECT_EQ(t->calls, 0);
}

TEST(Client, InvalidConfigRejected) {
  auto cfg = provider();
  cfg.max_in_flight = 0;
  EXPECT_THROW(ChatClient(cfg, std::make_shared<OfflineTransport>()), Error);
}

// Transport that tracks how many calls overlap.
class SlowTransport final : public Transport {
 public:
  HttpResult post(const std::string&, const std::map<std::string, std::string>&, const std::string&,
                  std::chrono::milliseconds) override {
    const int now = ++active;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(2ms);
    --active;
    return {200, ok_body("ok"), ""};
  }
  std::atomic<int> active{0};
  std::atomic<int> peak{0};
};

TEST(Client, InFlightBoundHolds) {
  auto t = std::make_shared<SlowTransport>();
  auto cfg = provider();
  cfg.max_in_flight = 2;
  auto c = std::make_shared<ChatClient>(cfg, t);
  c->set_env_lookup([](const std::string&) { return std::string("x"); });
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&] {
      for (int k = 0; k < 5; ++k) c->complete(kReq);
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_LE(t->peak.load(), 2);
  EXPECT_LE(c->peak_in_flight(), 2);
  EXPECT_EQ(c->attempts_made(), 40);
}

TEST(Store, RecordReplayRoundTrip) {
  testsupport::TempDir dir;
  ReplayStore store(dir.path());
  ChatResponse resp;
  resp.text = "line one\n\"quoted\" \xE2\x82\xAC";
  resp.usage = TokenUsage{5, 7};
  store.record(kReq, resp);
  const auto back = store.replay(kReq);
  EXPECT_EQ(back.text, resp.text);
  EXPECT_EQ(back.usage, resp.usage);
  EXPECT_EQ(back.fingerprint, fingerprint(kReq.tier, kReq.prompt));
}

TEST(Store, MissingFixtureNamesFingerprint) {
  testsupport::TempDir dir;
  ReplayStore store(dir.path());
  try {
    store.replay(kReq);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFixture);
    EXPECT_NE(std::string(e.what()).find(fingerprint(kReq.tier, kReq.prompt)), std::string::npos);
  }
}

TEST(Store, IdempotentAndConflicting) {
  testsupport::TempDir dir;
  ReplayStore store(dir.path());
  ChatResponse resp;
  resp.text = "same";
  store.record(kReq, resp);
  EXPECT_NO_THROW(store.record(kReq, resp));
  EXPECT_EQ(std::distance(std::filesystem::directory_iterator(dir.path()), std::filesystem::directory_iterator{}), 1);
  resp.text = "different";
  try {
    store.record(kReq, resp);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FixtureConflict);
  }
  EXPECT_EQ(store.replay(kReq).text, "same");
}

TEST(GatewayModes, ReplayNeverTouchesTransport) {
  testsupport::TempDir dir;
  auto store = std::make_shared<ReplayStore>(dir.path());
  ChatResponse resp;
  resp.text = "fixture";
  store->record(kReq, resp);
  auto offline = std::make_shared<OfflineTransport>();
  auto client = client_for(offline, 1);
  Gateway gw(Mode::Replay, client, store);
  EXPECT_EQ(gw.complete(kReq).text, "fixture");
  EXPECT_THROW(gw.complete({ModelTier::Advanced, kReq.prompt}), Error);
  EXPECT_EQ(offline->calls(), 0);
}

TEST(GatewayModes, RecordStoresLiveResponse) {
  testsupport::TempDir dir;
  auto store = std::make_shared<ReplayStore>(dir.path());
  auto t = std::make_shared<ScriptedTransport>(std::deque<HttpResult>{{200, ok_body("live text"), ""}});
  Gateway rec(Mode::Record, client_for(t, 1), store);
  EXPECT_EQ(rec.complete(kReq).text, "live text");
  Gateway replay(Mode::Replay, nullptr, store);
  EXPECT_EQ(replay.complete(kReq).text, "live text");
  EXPECT_EQ(t->calls, 1);
}

TEST(GatewayModes, MissingPiecesAreConfigErrors) {
  EXPECT_THROW(Gateway(Mode::Replay, nullptr, nullptr), Error);
  EXPECT_THROW(Gateway(Mode::Live, nullptr, nullptr), Error);
  EXPECT_EQ(mode_from_string("RECORD"), Mode::Record);
  EXPECT_FALSE(mode_from_string("offline"));
}
