#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "appraisal/prompt.hpp"

namespace appraisal {

enum class ProviderKind { OpenAiCompatible, LocalServer, Mock };
const char* to_string(ProviderKind kind);
ProviderKind parse_provider_kind(const std::string& text);

enum class MockBehavior { CompMedian, Scripted };

struct ModelEndpoint {
  std::string name;
  ProviderKind kind = ProviderKind::Mock;
  std::string base_url;
  std::string model;
  std::string api_key_env;  // name of the variable holding the key, never the key
  double temperature = 0.0;
  int seed = 0;
  int max_tokens = 100;          // steps 1 and 2
  int feature_max_tokens = 200;  // step 3
  std::chrono::milliseconds timeout{60000};
  MockBehavior mock = MockBehavior::CompMedian;
  std::vector<std::string> script;  // scripted mock replies by assistant turn

  /// Everything that changes a provider's answer; part of the cache key.
  std::string identity() const;
};

struct Usage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

struct CachedExchange {
  std::string key;
  std::string response_text;
  Usage usage;
  std::string created_at;
};

/// Content-addressed store: one JSON file per exchange under dir/<k0k1>/<key>.json.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  static std::string key(const ModelEndpoint& endpoint, const std::vector<ChatMessage>& turns, int max_tokens);

  std::optional<CachedExchange> get(const std::string& key) const;
  /// Atomic: written to a temporary file in the same directory, then renamed.
  void put(const CachedExchange& exchange) const;
  std::filesystem::path path_for(const std::string& key) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

struct HttpReply {
  int status = 0;  // 0: transport failure or timeout
  std::string body;
  std::string error;
};

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual HttpReply post_json(const std::string& base_url, const std::string& path, const std::string& body,
                              const std::vector<std::pair<std::string, std::string>>& headers,
                              std::chrono::milliseconds timeout) = 0;
};

/// cpp-httplib backed transport; http and https URLs.
class HttpChatTransport : public ChatTransport {
 public:
  HttpReply post_json(const std::string& base_url, const std::string& path, const std::string& body,
                      const std::vector<std::pair<std::string, std::string>>& headers,
                      std::chrono::milliseconds timeout) override;
};

/// Process-wide cap on in-flight provider calls.
class CallLimiter {
 public:
  static CallLimiter& global();

  void set_limit(int n);
  int limit() const;
  void acquire();
  void release();

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int limit_ = 4;
  int in_flight_ = 0;
};

struct RetryPolicy {
  int max_retries = 2;
  std::chrono::milliseconds base_delay{500};
};

struct Exchange {
  bool ok = false;
  std::string text;
  Usage usage;
  bool cache_hit = false;
  int attempts = 0;
  std::string error;
};

struct ClientStats {
  long calls = 0;  // provider (or mock) invocations, cache misses only
  long cache_hits = 0;
  long failures = 0;
  long attempts = 0;
};

/// Deterministic stand-in model. Comp-median answers from the prompt itself.
std::string mock_reply(const ModelEndpoint& endpoint, const std::vector<ChatMessage>& turns);

class ChatClient {
 public:
  ChatClient(ModelEndpoint endpoint, std::shared_ptr<ResponseCache> cache = nullptr,
             std::shared_ptr<ChatTransport> transport = nullptr, RetryPolicy retry = {});

  /// Cache first; on a miss one provider call plus up to max_retries retries on
  /// 429, 5xx and timeouts. Throws AuthError on 401/403 or a missing key.
  Exchange complete(const std::vector<ChatMessage>& turns, int max_tokens);

  const ModelEndpoint& endpoint() const { return endpoint_; }
  ClientStats stats() const;
  void set_sleep(std::function<void(std::chrono::milliseconds)> sleep) { sleep_ = std::move(sleep); }

 private:
  Exchange call_provider(const std::vector<ChatMessage>& turns, int max_tokens);

  ModelEndpoint endpoint_;
  std::shared_ptr<ResponseCache> cache_;
  std::shared_ptr<ChatTransport> transport_;
  RetryPolicy retry_;
  std::function<void(std::chrono::milliseconds)> sleep_;
  std::atomic<long> calls_{0}, hits_{0}, failures_{0}, attempts_{0};
  // First credential rejection; later calls fail fast without a request.
  std::mutex rejected_mu_;
  std::optional<std::string> rejected_;
};

}  // namespace appraisal
