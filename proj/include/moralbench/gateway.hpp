#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "moralbench/error.hpp"
#include "moralbench/io.hpp"
#include "moralbench/prompt.hpp"
#include "moralbench/text.hpp"

namespace moralbench {

struct ModelEndpoint {
  std::string name;
  /// Model identifier sent in the request body; falls back to `name`.
  std::string model;
  std::string base_url;
  std::size_t max_in_flight = 4;
  double requests_per_minute = 60.0;
  std::optional<std::string> auth_token;
  /// Environment variable holding the bearer token, read when `auth_token` is unset.
  std::string auth_env;
  /// Whether the server honors a `seed` field; it is omitted otherwise.
  bool supports_seed = false;
  double timeout_seconds = 300.0;

  void validate() const {
    if (name.empty()) throw Error(ErrorCode::kConfigError, "endpoint needs a name");
    if (max_in_flight < 1) throw Error(ErrorCode::kConfigError, name + ": max_in_flight must be >= 1");
    if (!(requests_per_minute > 0.0)) {
      throw Error(ErrorCode::kConfigError, name + ": requests_per_minute must be > 0");
    }
  }

  std::optional<std::string> resolve_token() const {
    if (auth_token) return auth_token;
    if (!auth_env.empty()) {
      if (const char* v = std::getenv(auth_env.c_str())) return std::string(v);
    }
    return std::nullopt;
  }
};

struct GenerationParams {
  double temperature = 0.7;
  std::size_t max_new_tokens = 2048;
  std::optional<long long> seed = 42;

  void validate() const {
    if (!(temperature >= 0.0)) throw Error(ErrorCode::kConfigError, "temperature must be >= 0");
    if (max_new_tokens < 1) throw Error(ErrorCode::kConfigError, "max_new_tokens must be >= 1");
  }
};

struct RawCompletion {
  std::string example_id;
  std::string strategy_id;
  std::string text;
  std::chrono::milliseconds latency{0};
  std::size_t attempt_count = 1;
  std::string endpoint_name;
  bool from_transcript = false;
};

struct HttpReply {
  int status = 0;  // 0 when the request never got a response
  std::string body;
  std::string transport_error;
};

/// Moves one JSON request body to an endpoint. Implementations must be thread-safe.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpReply post(const ModelEndpoint& endpoint, const std::string& body) = 0;
};

enum class RetryClass { kSuccess, kRetryable, kAuth, kTerminal };

/// 408/429/5xx and transport failures retry; 401/403 are auth failures; other 4xx are final.
constexpr RetryClass classify(int status) {
  if (status >= 200 && status < 300) return RetryClass::kSuccess;
  if (status == 0 || status == 408 || status == 429 || status >= 500) return RetryClass::kRetryable;
  if (status == 401 || status == 403) return RetryClass::kAuth;
  return RetryClass::kTerminal;
}

struct RetryPolicy {
  std::size_t max_attempts = 6;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{30000};
  /// Injected so tests can run without real sleeps.
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };

  std::chrono::milliseconds delay_before(std::size_t attempt) const {
    // attempt is 1-based; the first retry waits base_delay.
    auto d = base_delay;
    for (std::size_t i = 2; i < attempt && d < max_delay; ++i) d *= 2;
    return std::min(d, max_delay);
  }
};

inline std::string build_request_body(const ModelEndpoint& endpoint, const RenderedPrompt& prompt,
                                      const GenerationParams& params) {
  nlohmann::ordered_json body;
  body["model"] = endpoint.model.empty() ? endpoint.name : endpoint.model;
  body["messages"] = nlohmann::ordered_json::array({{{"role", "user"}, {"content", prompt.text}}});
  body["temperature"] = params.temperature;
  body["max_tokens"] = params.max_new_tokens;
  if (endpoint.supports_seed && params.seed) body["seed"] = *params.seed;
  body["stream"] = false;
  return body.dump();
}

/// First choice's text from a chat-completions (or legacy completions) payload.
inline std::string parse_completion_body(const std::string& body) {
  try {
    auto j = nlohmann::json::parse(body);
    const auto& choice = j.at("choices").at(0);
    if (auto m = choice.find("message"); m != choice.end()) {
      const auto& content = m->at("content");
      if (content.is_string()) return content.get<std::string>();
    }
    if (auto t = choice.find("text"); t != choice.end() && t->is_string()) return t->get<std::string>();
  } catch (const nlohmann::json::exception&) {
  }
  throw Error(ErrorCode::kMalformedResponse, "cannot read choices[0] text from response body");
}

/// Extracts the single user message from a request body built by build_request_body.
inline std::string request_prompt(const std::string& body) {
  auto j = nlohmann::json::parse(body);
  return j.at("messages").at(0).at("content").get<std::string>();
}

inline std::string prompt_hash(std::string_view prompt_text) { return text::content_hash(prompt_text); }

/// Token bucket refilled at requests_per_minute / 60 per second, burst of
/// max(1, max_in_flight) tokens.
class TokenBucket {
 public:
  TokenBucket(double per_minute, double burst)
      : rate_per_sec_(per_minute / 60.0),
        capacity_(std::max(1.0, burst)),
        tokens_(capacity_),
        last_(std::chrono::steady_clock::now()) {}

  void acquire() {
    std::unique_lock lock(mu_);
    while (true) {
      refill();
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_per_sec_);
      lock.unlock();
      std::this_thread::sleep_for(wait);
      lock.lock();
    }
  }

 private:
  void refill() {
    auto now = std::chrono::steady_clock::now();
    std::chrono::duration<double> dt = now - last_;
    last_ = now;
    tokens_ = std::min(capacity_, tokens_ + dt.count() * rate_per_sec_);
  }

  std::mutex mu_;
  double rate_per_sec_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

/// Process-wide admission control for one endpoint: a concurrency cap plus a rate limit.
class EndpointLimiter {
 public:
  EndpointLimiter(std::size_t max_in_flight, double per_minute)
      : max_in_flight_(max_in_flight), bucket_(per_minute, static_cast<double>(max_in_flight)) {}

  class Slot {
   public:
    explicit Slot(EndpointLimiter& l) : limiter_(&l) {}
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;
    ~Slot() { limiter_->release(); }

   private:
    EndpointLimiter* limiter_;
  };

  [[nodiscard]] Slot acquire() {
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
      ++in_flight_;
    }
    bucket_.acquire();
    return Slot(*this);
  }

  static EndpointLimiter& for_endpoint(const ModelEndpoint& e) {
    static std::mutex registry_mu;
    static std::map<std::string, std::unique_ptr<EndpointLimiter>> registry;
    std::lock_guard lock(registry_mu);
    auto key = e.name + "|" + std::to_string(e.max_in_flight) + "|" + std::to_string(e.requests_per_minute);
    auto& slot = registry[key];
    if (!slot) slot = std::make_unique<EndpointLimiter>(e.max_in_flight, e.requests_per_minute);
    return *slot;
  }

 private:
  void release() {
    {
      std::lock_guard lock(mu_);
      --in_flight_;
    }
    cv_.notify_one();
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
  std::size_t max_in_flight_;
  TokenBucket bucket_;
};

struct TranscriptEntry {
  std::string endpoint;
  std::string strategy_id;
  std::string example_id;
  std::string prompt_hash;
  GenerationParams params;
  std::string response;
  long long latency_ms = 0;
  std::size_t attempts = 1;
  std::string timestamp;

  std::string key() const { return endpoint + "|" + strategy_id + "|" + example_id + "|" + prompt_hash; }
};

inline std::string transcript_key(const ModelEndpoint& e, const RenderedPrompt& p) {
  return e.name + "|" + p.strategy_id + "|" + p.example_id + "|" + prompt_hash(p.text);
}

inline std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Append-only JSON-lines log of every successful request, reloaded to resume runs.
class TranscriptLog {
 public:
  explicit TranscriptLog(std::filesystem::path path) : path_(std::move(path)) {
    if (std::filesystem::exists(path_)) {
      const auto data = io::read_file(path_);
      for (auto line : text::split_lines(data)) {
        if (text::trim(line).empty()) continue;
        try {
          auto e = from_json(nlohmann::json::parse(line));
          entries_[e.key()] = std::move(e);
        } catch (const nlohmann::json::exception&) {
          // A torn final line from an interrupted run; the request is simply redone.
        }
      }
    } else if (path_.has_parent_path()) {
      std::filesystem::create_directories(path_.parent_path());
    }
    out_.open(path_, std::ios::app | std::ios::binary);
    if (!out_) throw Error(ErrorCode::kIOError, "cannot open transcript '" + path_.string() + "'");
  }

  std::optional<TranscriptEntry> lookup(const std::string& key) const {
    std::lock_guard lock(mu_);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    return std::nullopt;
  }

  void record(const TranscriptEntry& e) {
    auto line = to_json(e).dump() + "\n";
    std::lock_guard lock(mu_);
    out_ << line;
    out_.flush();
    entries_[e.key()] = e;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

  static nlohmann::ordered_json to_json(const TranscriptEntry& e) {
    nlohmann::ordered_json j;
    j["endpoint"] = e.endpoint;
    j["strategy"] = e.strategy_id;
    j["example_id"] = e.example_id;
    j["prompt_hash"] = e.prompt_hash;
    j["params"] = {{"temperature", e.params.temperature}, {"max_new_tokens", e.params.max_new_tokens}};
    if (e.params.seed) j["params"]["seed"] = *e.params.seed;
    j["response"] = e.response;
    j["latency_ms"] = e.latency_ms;
    j["attempts"] = e.attempts;
    j["timestamp"] = e.timestamp;
    return j;
  }

  static TranscriptEntry from_json(const nlohmann::json& j) {
    TranscriptEntry e;
    e.endpoint = j.at("endpoint").get<std::string>();
    e.strategy_id = j.at("strategy").get<std::string>();
    e.example_id = j.at("example_id").get<std::string>();
    e.prompt_hash = j.at("prompt_hash").get<std::string>();
    const auto& p = j.at("params");
    e.params.temperature = p.at("temperature").get<double>();
    e.params.max_new_tokens = p.at("max_new_tokens").get<std::size_t>();
    e.params.seed = p.contains("seed") ? std::optional<long long>(p.at("seed").get<long long>()) : std::nullopt;
    e.response = j.at("response").get<std::string>();
    e.latency_ms = j.value("latency_ms", 0LL);
    e.attempts = j.value("attempts", std::size_t{1});
    e.timestamp = j.value("timestamp", std::string{});
    return e;
  }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::ofstream out_;
  std::map<std::string, TranscriptEntry> entries_;
};

struct ItemError {
  std::size_t index = 0;
  std::string example_id;
  ErrorCode code = ErrorCode::kExhausted;
  std::string message;
};

struct BatchResult {
  /// Successful completions in input order.
  std::vector<RawCompletion> completions;
  std::vector<ItemError> errors;
};

class Gateway {
 public:
  explicit Gateway(std::shared_ptr<Transport> transport, RetryPolicy retry = {},
                   std::shared_ptr<TranscriptLog> transcript = nullptr)
      : transport_(std::move(transport)), retry_(std::move(retry)), transcript_(std::move(transcript)) {}

  RawCompletion complete(const ModelEndpoint& endpoint, const RenderedPrompt& prompt,
                         const GenerationParams& params) const {
    if (transcript_) {
      if (auto hit = transcript_->lookup(transcript_key(endpoint, prompt))) {
        return {prompt.example_id, prompt.strategy_id, hit->response,
                std::chrono::milliseconds(hit->latency_ms), hit->attempts, endpoint.name, true};
      }
    }
    const auto body = build_request_body(endpoint, prompt, params);
    auto& limiter = EndpointLimiter::for_endpoint(endpoint);
    const auto start = std::chrono::steady_clock::now();
    std::string last_failure;
    for (std::size_t attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
      if (attempt > 1) retry_.sleep(retry_.delay_before(attempt));
      HttpReply reply;
      {
        auto slot = limiter.acquire();
        reply = transport_->post(endpoint, body);
      }
      switch (classify(reply.status)) {
        case RetryClass::kSuccess: {
          RawCompletion c{prompt.example_id, prompt.strategy_id, parse_completion_body(reply.body),
                          std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - start),
                          attempt, endpoint.name};
          if (transcript_) {
            transcript_->record({endpoint.name, prompt.strategy_id, prompt.example_id,
                                 prompt_hash(prompt.text), params, c.text, c.latency.count(), attempt,
                                 utc_timestamp()});
          }
          return c;
        }
        case RetryClass::kAuth:
          throw Error(ErrorCode::kAuthError,
                      endpoint.name + " rejected credentials (HTTP " + std::to_string(reply.status) + ")");
        case RetryClass::kTerminal:
          throw Error(ErrorCode::kRequestRejected,
                      endpoint.name + " returned HTTP " + std::to_string(reply.status) + ": " + reply.body);
        case RetryClass::kRetryable:
          last_failure = reply.status == 0 ? reply.transport_error : "HTTP " + std::to_string(reply.status);
          break;
      }
    }
    throw Error(ErrorCode::kExhausted, endpoint.name + ": gave up after " +
                                           std::to_string(retry_.max_attempts) +
                                           " attempts (last: " + last_failure + ")");
  }

  /// Runs every prompt once, at most endpoint.max_in_flight at a time. Item failures are
  /// reported in `errors` and never abort the batch.
  BatchResult complete_batch(const ModelEndpoint& endpoint, std::span<const RenderedPrompt> prompts,
                             const GenerationParams& params) const {
    if (prompts.empty()) throw Error(ErrorCode::kEmptyInput, "empty prompt batch");
    std::vector<std::optional<RawCompletion>> slots(prompts.size());
    std::vector<ItemError> errors;
    std::mutex errors_mu;
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
      for (auto i = next.fetch_add(1); i < prompts.size(); i = next.fetch_add(1)) {
        try {
          slots[i] = complete(endpoint, prompts[i], params);
        } catch (const Error& e) {
          std::lock_guard lock(errors_mu);
          errors.push_back({i, prompts[i].example_id, e.code(), e.what()});
        } catch (const std::exception& e) {
          std::lock_guard lock(errors_mu);
          errors.push_back({i, prompts[i].example_id, ErrorCode::kMalformedResponse, e.what()});
        }
      }
    };
    const auto n_workers = std::min(endpoint.max_in_flight, prompts.size());
    std::vector<std::jthread> pool;
    pool.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    pool.clear();  // joins

    BatchResult result;
    for (auto& s : slots) {
      if (s) result.completions.push_back(std::move(*s));
    }
    result.errors = std::move(errors);
    std::sort(result.errors.begin(), result.errors.end(),
              [](const ItemError& a, const ItemError& b) { return a.index < b.index; });
    return result;
  }

 private:
  std::shared_ptr<Transport> transport_;
  RetryPolicy retry_;
  std::shared_ptr<TranscriptLog> transcript_;
};

/// In-process endpoint. `responder` sees the request body and returns the reply; the mock
/// also tracks how many calls were in flight at once.
class MockTransport : public Transport {
 public:
  using Responder = std::function<HttpReply(const std::string& request_body)>;

  explicit MockTransport(Responder responder, std::chrono::microseconds latency = {})
      : responder_(std::move(responder)), latency_(latency) {}

  /// Answers from a table keyed by prompt hash; unknown prompts get HTTP 404.
  static std::shared_ptr<MockTransport> scripted(std::map<std::string, std::string> by_prompt_hash) {
    return std::make_shared<MockTransport>(
        [table = std::move(by_prompt_hash)](const std::string& body) -> HttpReply {
          auto it = table.find(prompt_hash(request_prompt(body)));
          if (it == table.end()) return {404, R"({"error":"unscripted prompt"})", {}};
          return {200, chat_body(it->second), {}};
        });
  }

  static std::string chat_body(const std::string& content) {
    nlohmann::json j;
    j["choices"] = nlohmann::json::array(
        {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}}});
    return j.dump();
  }

  HttpReply post(const ModelEndpoint&, const std::string& body) override {
    auto now = ++in_flight_;
    auto peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    ++calls_;
    if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
    HttpReply reply;
    try {
      reply = responder_(body);
    } catch (...) {
      --in_flight_;
      throw;
    }
    --in_flight_;
    return reply;
  }

  std::size_t peak_in_flight() const { return peak_.load(); }
  std::size_t calls() const { return calls_.load(); }

 private:
  Responder responder_;
  std::chrono::microseconds latency_;
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> peak_{0};
  std::atomic<std::size_t> calls_{0};
};

}  // namespace moralbench
