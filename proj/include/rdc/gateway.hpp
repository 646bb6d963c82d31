#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rdc/http.hpp"
#include "rdc/prompt.hpp"

namespace rdc {

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 512;
  /// Distinguishes independent draws of one prompt (USC sampling).
  int sample_index = 0;
};

struct ChatResponse {
  std::string text;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  std::chrono::milliseconds latency{0};
  std::string backend_id;
  bool from_cache = false;
};

/// Digest of (messages, temperature, max_tokens, sample_index).
std::string request_digest(const ChatRequest& request);

// ---------------------------------------------------------------------------
// Mock backend

/// What a mock rule sees. `draw` is a 64-bit value fixed by (script seed,
/// request digest, sample_index); `rng` is an engine seeded from it.
struct MockCall {
  std::string_view prompt;
  const ChatRequest& request;
  std::uint64_t draw;
  std::mt19937_64& rng;

  double uniform() const;
};

struct MockRule {
  /// Empty matcher means catch-all.
  std::function<bool(std::string_view prompt)> matches;
  std::function<std::string(const MockCall&)> reply;

  bool catch_all() const { return !matches; }

  static MockRule always(std::string reply);
  static MockRule contains(std::string needle, std::string reply);
  /// Replies `correct` with probability `p_correct`, otherwise one of `wrong`
  /// chosen uniformly. An empty matcher makes it a catch-all.
  static MockRule noisy(std::function<bool(std::string_view)> matcher, std::string correct,
                        std::vector<std::string> wrong, double p_correct);
};

/// Ordered rules; the first match replies. The last rule must be a catch-all.
class MockScript {
 public:
  MockScript(std::vector<MockRule> rules, std::uint64_t seed);

  std::string reply(const ChatRequest& request) const;
  std::uint64_t seed() const { return seed_; }

 private:
  std::vector<MockRule> rules_;
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Backends

struct BackendConfig {
  enum class Kind { Remote, Mock };

  std::string backend_id;
  Kind kind = Kind::Mock;
  std::string base_url;
  std::string model_name;
  double temperature = 0.0;
  int max_tokens = 512;
  std::chrono::milliseconds timeout{60000};
  RetryPolicy retry;
  std::string api_key_env;
  std::shared_ptr<const MockScript> mock;

  void validate() const;
};

BackendConfig mock_script(std::vector<MockRule> rules, std::uint64_t seed = 0, std::string backend_id = "mock",
                          std::string model_name = "mock");

/// Digest of (backend_id, model_name, messages, temperature, max_tokens, sample_index).
std::string cache_key(const ChatRequest& request, const BackendConfig& backend);

// ---------------------------------------------------------------------------
// Cache

struct CachedResponse {
  std::string backend_id;
  std::string request_digest;
  std::string text;
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

/// In-memory map mirrored to an append-only JSONL file
/// `{key, backend_id, request_digest, text, usage, timestamp}`. A truncated
/// final line (interrupted write) is ignored on load.
class ResponseCache {
 public:
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path path);

  std::optional<CachedResponse> lookup(const std::string& key) const;
  void store(const std::string& key, const CachedResponse& entry);
  std::size_t size() const;

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, CachedResponse> entries_;
  std::optional<std::filesystem::path> path_;
  std::ofstream out_;
};

// ---------------------------------------------------------------------------
// Gateway

struct BatchItem {
  std::optional<ChatResponse> response;
  std::string error;
};

class Gateway {
 public:
  /// `max_in_flight` bounds uncompleted backend calls per backend id across all
  /// callers of this gateway.
  explicit Gateway(std::shared_ptr<ResponseCache> cache = nullptr, std::size_t max_in_flight = 8);

  /// Cache hit: stored text, from_cache = true, no backend call. Miss: call
  /// the backend (remote with retries), store, return.
  ChatResponse complete(const ChatRequest& request, const BackendConfig& backend);

  /// Positionally aligned results; failures are reported per position.
  std::vector<BatchItem> complete_batch(const std::vector<ChatRequest>& requests, const BackendConfig& backend,
                                        std::size_t max_in_flight);

  std::size_t max_in_flight() const { return max_in_flight_; }
  std::uint64_t requests() const { return requests_.load(); }
  std::uint64_t backend_calls() const { return backend_calls_.load(); }
  std::uint64_t cache_hits() const { return cache_hits_.load(); }
  std::uint64_t backend_calls(const std::string& backend_id) const;

 private:
  class Limiter {
   public:
    explicit Limiter(std::size_t limit) : limit_(limit) {}
    void acquire();
    void release();

   private:
    std::mutex mutex_;
    std::condition_variable cv_;
    std::size_t limit_;
    std::size_t active_ = 0;
  };

  Limiter& limiter_for(const std::string& backend_id);
  ChatResponse call_backend(const ChatRequest& request, const BackendConfig& backend);

  std::shared_ptr<ResponseCache> cache_;
  std::size_t max_in_flight_;
  std::mutex limiter_mutex_;
  std::map<std::string, std::unique_ptr<Limiter>> limiters_;
  mutable std::mutex counter_mutex_;
  std::map<std::string, std::uint64_t> per_backend_calls_;
  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> backend_calls_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
};

/// JSON body for POST {base_url}/chat/completions.
std::string chat_request_body(const ChatRequest& request, const BackendConfig& backend);
/// Reads choices[0].message.content and usage; throws RuntimeError when malformed.
ChatResponse parse_chat_response_body(std::string_view body);

}  // namespace rdc
