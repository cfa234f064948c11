#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chartinstruct/taskgen.hpp"

namespace chartinstruct::gateway {

using taskgen::ModelTier;

struct TierEndpoint {
  std::string url;       // full URL of the chat-completions endpoint
  std::string auth_env;  // name of the environment variable holding the bearer token
  std::string model;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{500};
};

struct ProviderConfig {
  std::map<ModelTier, TierEndpoint> endpoints;
  int max_in_flight = 4;
  RetryPolicy retry;
  std::chrono::milliseconds timeout{60000};
  std::optional<double> temperature;

  // Throws Error(Config) when an invariant is violated.
  void validate() const;
};

// Lowercase hex SHA-256 over one tier byte (0 standard, 1 advanced) followed
// by the UTF-8 prompt bytes.
std::string fingerprint(ModelTier tier, std::string_view prompt);

struct ChatRequest {
  ModelTier tier = ModelTier::Standard;
  std::string prompt;

  static ChatRequest from(const taskgen::GenerationRequest& req) { return {req.tier, req.prompt_text}; }
};

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  bool operator==(const TokenUsage&) const = default;
};

struct ChatResponse {
  std::string fingerprint;
  std::string text;
  std::optional<TokenUsage> usage;
  std::chrono::milliseconds latency{0};
};

// Wire body: {"model":..., "messages":[{"role":"user","content":...}]}.
std::string build_request_body(const TierEndpoint& endpoint, std::string_view prompt,
                               std::optional<double> temperature);

// Reads choices[0].message.content (or choices[0].text) and usage.
// Throws Error(NotJson) when the body does not have that shape.
ChatResponse parse_response_body(std::string_view body);

struct HttpResult {
  int status = 0;  // 0: the request never produced an HTTP status (timeout, refused)
  std::string body;
  std::string error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResult post(const std::string& url, const std::map<std::string, std::string>& headers,
                          const std::string& body, std::chrono::milliseconds timeout) = 0;
};

// cpp-httplib backed transport; http and https URLs.
std::unique_ptr<Transport> make_http_transport();

// Fails every call. Lets tests assert that a code path stays offline.
class OfflineTransport final : public Transport {
 public:
  HttpResult post(const std::string& url, const std::map<std::string, std::string>&,
                  const std::string&, std::chrono::milliseconds) override;
  int calls() const { return calls_; }

 private:
  int calls_ = 0;
};

// Counting bound on simultaneous in-flight requests.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(int limit);

  void acquire();
  void release();
  int peak() const;
  int limit() const { return limit_; }

 private:
  int limit_;
  int current_ = 0;
  int peak_ = 0;
  mutable std::mutex mu_;
  std::condition_variable cv_;
};

class ChatClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;
  using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

  ChatClient(ProviderConfig config, std::shared_ptr<Transport> transport);

  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }
  void set_env_lookup(EnvLookup lookup) { env_ = std::move(lookup); }

  // Retries timeouts, 429 and 5xx with exponential backoff. Throws
  // Error(AuthMissing) or Error(Exhausted) carrying the last cause.
  ChatResponse complete(const ChatRequest& req);
  ChatResponse complete(const taskgen::GenerationRequest& req) { return complete(ChatRequest::from(req)); }

  int attempts_made() const;
  int peak_in_flight() const { return limiter_.peak(); }
  const ProviderConfig& config() const { return config_; }

 private:
  ProviderConfig config_;
  std::shared_ptr<Transport> transport_;
  InFlightLimiter limiter_;
  Sleeper sleeper_;
  EnvLookup env_;
  mutable std::mutex stats_mu_;
  int attempts_ = 0;
};

// One JSON file per fingerprint: {fingerprint, tier, prompt, text, usage}.
class ReplayStore {
 public:
  explicit ReplayStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path entry_path(std::string_view fp) const;
  bool contains(std::string_view fp) const;

  // Idempotent for an identical text; throws Error(FixtureConflict) for a
  // different text under an existing fingerprint.
  void record(const ChatRequest& req, const ChatResponse& resp);

  // Throws Error(MissingFixture) naming the fingerprint.
  ChatResponse replay(const ChatRequest& req) const;

 private:
  std::filesystem::path dir_;
  mutable std::mutex write_mu_;
};

enum class Mode { Live, Replay, Record };

std::string_view to_string(Mode mode);
std::optional<Mode> mode_from_string(std::string_view s);

// Dispatches on mode: replay never touches the client; record calls the
// client and stores the result.
class Gateway {
 public:
  Gateway(Mode mode, std::shared_ptr<ChatClient> client, std::shared_ptr<ReplayStore> store);

  ChatResponse complete(const ChatRequest& req);
  Mode mode() const { return mode_; }
  int max_in_flight() const;

 private:
  Mode mode_;
  std::shared_ptr<ChatClient> client_;
  std::shared_ptr<ReplayStore> store_;
};

}  // namespace chartinstruct::gateway
