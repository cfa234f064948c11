#include "chartinstruct/gateway.hpp"

#include <cstdlib>
#include <thread>

#include <openssl/evp.h>

#include <httplib.h>
#include <json.hpp>

#include "chartinstruct/error.hpp"
#include "chartinstruct/fileio.hpp"
#include "chartinstruct/numeric.hpp"

namespace chartinstruct::gateway {

using nlohmann::json;

void ProviderConfig::validate() const {
  if (max_in_flight < 1) throw Error(ErrorCode::Config, "max_in_flight must be >= 1");
  if (retry.max_attempts < 1) throw Error(ErrorCode::Config, "retry.max_attempts must be >= 1");
  if (retry.backoff_base.count() < 0) throw Error(ErrorCode::Config, "retry.backoff_ms must be >= 0");
  if (timeout.count() <= 0) throw Error(ErrorCode::Config, "timeout_ms must be > 0");
}

std::string fingerprint(ModelTier tier, std::string_view prompt) {
  const unsigned char tier_byte = tier == ModelTier::Standard ? 0 : 1;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx, &tier_byte, 1);
  EVP_DigestUpdate(ctx, prompt.data(), prompt.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string build_request_body(const TierEndpoint& endpoint, std::string_view prompt,
                               std::optional<double> temperature) {
  json body = {{"model", endpoint.model},
               {"messages", json::array({{{"role", "user"}, {"content", std::string(prompt)}}})}};
  if (temperature) body["temperature"] = *temperature;
  return body.dump();
}

ChatResponse parse_response_body(std::string_view body) {
  const auto j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::NotJson, "response body is not a JSON object");
  ChatResponse resp;
  const auto choices = j.find("choices");
  if (choices == j.end() || !choices->is_array() || choices->empty())
    throw Error(ErrorCode::NotJson, "response has no choices");
  const auto& first = (*choices)[0];
  if (first.contains("message") && first["message"].is_object() &&
      first["message"].contains("content") && first["message"]["content"].is_string()) {
    resp.text = first["message"]["content"].get<std::string>();
  } else if (first.contains("text") && first["text"].is_string()) {
    resp.text = first["text"].get<std::string>();
  } else {
    throw Error(ErrorCode::NotJson, "response choice carries no text");
  }
  if (const auto u = j.find("usage"); u != j.end() && u->is_object()) {
    TokenUsage usage;
    usage.prompt_tokens = u->value("prompt_tokens", std::int64_t{0});
    usage.completion_tokens = u->value("completion_tokens", std::int64_t{0});
    resp.usage = usage;
  }
  return resp;
}

namespace {

class HttplibTransport final : public Transport {
 public:
  HttpResult post(const std::string& url, const std::map<std::string, std::string>& headers,
                  const std::string& body, std::chrono::milliseconds timeout) override {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) return {0, "", "malformed url " + url};
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string base = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(base);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(path, h, body, "application/json");
    if (!res) return {0, "", httplib::to_string(res.error())};
    return {res->status, res->body, ""};
  }
};

bool is_transient(const HttpResult& r) {
  return r.status == 0 || r.status == 429 || (r.status >= 500 && r.status <= 599);
}

std::string describe(const HttpResult& r) {
  if (r.status == 0) return "transport error: " + r.error;
  std::string snippet = r.body.substr(0, 200);
  return "HTTP " + std::to_string(r.status) + (snippet.empty() ? "" : ": " + snippet);
}

}  // namespace

std::unique_ptr<Transport> make_http_transport() { return std::make_unique<HttplibTransport>(); }

HttpResult OfflineTransport::post(const std::string& url, const std::map<std::string, std::string>&,
                                  const std::string&, std::chrono::milliseconds) {
  ++calls_;
  return {0, "", "offline transport refused request to " + url};
}

InFlightLimiter::InFlightLimiter(int limit) : limit_(limit < 1 ? 1 : limit) {}

void InFlightLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return current_ < limit_; });
  ++current_;
  if (current_ > peak_) peak_ = current_;
}

void InFlightLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --current_;
  }
  cv_.notify_one();
}

int InFlightLimiter::peak() const {
  std::lock_guard lock(mu_);
  return peak_;
}

ChatClient::ChatClient(ProviderConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      limiter_((config_.validate(), config_.max_in_flight)),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }),
      env_([](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str())) return std::string(v);
        return std::nullopt;
      }) {}

int ChatClient::attempts_made() const {
  std::lock_guard lock(stats_mu_);
  return attempts_;
}

ChatResponse ChatClient::complete(const ChatRequest& req) {
  const auto ep = config_.endpoints.find(req.tier);
  if (ep == config_.endpoints.end())
    throw Error(ErrorCode::Config, "no endpoint configured for tier " + std::string(taskgen::to_string(req.tier)));
  const TierEndpoint& endpoint = ep->second;
  if (endpoint.auth_env.empty())
    throw Error(ErrorCode::AuthMissing, "no auth_env configured for tier " + std::string(taskgen::to_string(req.tier)));
  const auto token = env_(endpoint.auth_env);
  if (!token || token->empty())
    throw Error(ErrorCode::AuthMissing, "environment variable " + endpoint.auth_env + " is not set");

  const std::map<std::string, std::string> headers = {{"Authorization", "Bearer " + *token}};
  const std::string body = build_request_body(endpoint, req.prompt, config_.temperature);

  std::string last_cause;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    if (attempt > 1) sleeper_(config_.retry.backoff_base * (1LL << std::min(attempt - 2, 20)));
    const auto start = std::chrono::steady_clock::now();
    limiter_.acquire();
    HttpResult result;
    try {
      result = transport_->post(endpoint.url, headers, body, config_.timeout);
    } catch (...) {
      limiter_.release();
      throw;
    }
    limiter_.release();
    {
      std::lock_guard lock(stats_mu_);
      ++attempts_;
    }
    if (result.status >= 200 && result.status < 300) {
      try {
        auto resp = parse_response_body(result.body);
        resp.fingerprint = fingerprint(req.tier, req.prompt);
        resp.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start);
        return resp;
      } catch (const Error& e) {
        throw Error(ErrorCode::Exhausted, std::string("malformed completion response: ") + e.what());
      }
    }
    last_cause = describe(result);
    if (!is_transient(result)) {
      throw Error(ErrorCode::Exhausted, "non-retryable failure after " + std::to_string(attempt) +
                                            " attempt(s): " + last_cause);
    }
  }
  throw Error(ErrorCode::Exhausted, "all " + std::to_string(config_.retry.max_attempts) +
                                        " attempt(s) failed; last cause: " + last_cause);
}

ReplayStore::ReplayStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path ReplayStore::entry_path(std::string_view fp) const {
  return dir_ / (std::string(fp) + ".json");
}

bool ReplayStore::contains(std::string_view fp) const { return std::filesystem::exists(entry_path(fp)); }

void ReplayStore::record(const ChatRequest& req, const ChatResponse& resp) {
  const std::string fp = fingerprint(req.tier, req.prompt);
  std::lock_guard lock(write_mu_);
  const auto path = entry_path(fp);
  if (std::filesystem::exists(path)) {
    const auto existing = json::parse(read_file(path), nullptr, false);
    if (!existing.is_discarded() && existing.value("text", std::string()) == resp.text) return;
    throw Error(ErrorCode::FixtureConflict, "fixture " + fp + " already holds a different response");
  }
  nlohmann::ordered_json j;
  j["fingerprint"] = fp;
  j["tier"] = std::string(taskgen::to_string(req.tier));
  j["prompt"] = req.prompt;
  j["text"] = resp.text;
  if (resp.usage) {
    j["usage"] = {{"prompt_tokens", resp.usage->prompt_tokens},
                  {"completion_tokens", resp.usage->completion_tokens}};
  } else {
    j["usage"] = nullptr;
  }
  write_file_atomic(path, j.dump(2) + "\n");
}

ChatResponse ReplayStore::replay(const ChatRequest& req) const {
  const std::string fp = fingerprint(req.tier, req.prompt);
  const auto path = entry_path(fp);
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFixture, "missing fixture " + fp);
  const auto j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("text") || !j["text"].is_string())
    throw Error(ErrorCode::MissingFixture, "fixture " + fp + " is unreadable");
  ChatResponse resp;
  resp.fingerprint = fp;
  resp.text = j["text"].get<std::string>();
  if (j.contains("usage") && j["usage"].is_object()) {
    resp.usage = TokenUsage{j["usage"].value("prompt_tokens", std::int64_t{0}),
                            j["usage"].value("completion_tokens", std::int64_t{0})};
  }
  return resp;
}

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::Live: return "live";
    case Mode::Replay: return "replay";
    case Mode::Record: return "record";
  }
  return "replay";
}

std::optional<Mode> mode_from_string(std::string_view s) {
  for (auto m : {Mode::Live, Mode::Replay, Mode::Record}) {
    if (iequals(trim(s), to_string(m))) return m;
  }
  return std::nullopt;
}

Gateway::Gateway(Mode mode, std::shared_ptr<ChatClient> client, std::shared_ptr<ReplayStore> store)
    : mode_(mode), client_(std::move(client)), store_(std::move(store)) {
  if ((mode_ == Mode::Replay || mode_ == Mode::Record) && !store_)
    throw Error(ErrorCode::Config, std::string(to_string(mode_)) + " mode requires a replay directory");
  if ((mode_ == Mode::Live || mode_ == Mode::Record) && !client_)
    throw Error(ErrorCode::Config, std::string(to_string(mode_)) + " mode requires a provider config");
}

ChatResponse Gateway::complete(const ChatRequest& req) {
  switch (mode_) {
    case Mode::Replay:
      return store_->replay(req);
    case Mode::Live:
      return client_->complete(req);
    case Mode::Record: {
      auto resp = client_->complete(req);
      store_->record(req, resp);
      return resp;
    }
  }
  return store_->replay(req);
}

int Gateway::max_in_flight() const { return client_ ? client_->config().max_in_flight : 1; }

}  // namespace chartinstruct::gateway
