#include "rdc/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "rdc/error.hpp"
#include "rdc/util.hpp"

namespace rdc {

namespace {

nlohmann::json messages_json(const std::vector<ChatMessage>& messages) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : messages) out.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return out;
}

std::string flat_prompt(const std::vector<ChatMessage>& messages) {
  std::string out;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += messages[i].content;
  }
  return out;
}

int word_count(std::string_view text) {
  int n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

}  // namespace

std::string request_digest(const ChatRequest& request) {
  nlohmann::json j;
  j["messages"] = messages_json(request.messages);
  j["temperature"] = request.temperature;
  j["max_tokens"] = request.max_tokens;
  j["sample_index"] = request.sample_index;
  return sha256_hex(j.dump());
}

std::string cache_key(const ChatRequest& request, const BackendConfig& backend) {
  nlohmann::json j;
  j["backend_id"] = backend.backend_id;
  j["model_name"] = backend.model_name;
  j["messages"] = messages_json(request.messages);
  j["temperature"] = request.temperature;
  j["max_tokens"] = request.max_tokens;
  j["sample_index"] = request.sample_index;
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------------------

double MockCall::uniform() const { return uniform_unit(draw); }

MockRule MockRule::always(std::string reply) {
  return MockRule{nullptr, [text = std::move(reply)](const MockCall&) { return text; }};
}

MockRule MockRule::contains(std::string needle, std::string reply) {
  return MockRule{[n = std::move(needle)](std::string_view prompt) { return prompt.find(n) != std::string_view::npos; },
                  [text = std::move(reply)](const MockCall&) { return text; }};
}

MockRule MockRule::noisy(std::function<bool(std::string_view)> matcher, std::string correct,
                         std::vector<std::string> wrong, double p_correct) {
  if (!(p_correct >= 0.0 && p_correct <= 1.0)) {
    throw ValidationError("noisy mock rule: probability must be in [0, 1]");
  }
  if (wrong.empty() && p_correct < 1.0) {
    throw ValidationError("noisy mock rule: needs at least one wrong reply");
  }
  return MockRule{std::move(matcher),
                  [correct = std::move(correct), wrong = std::move(wrong), p_correct](const MockCall& call) {
                    if (call.uniform() < p_correct) return correct;
                    return wrong[uniform_below(call.rng, wrong.size())];
                  }};
}

MockScript::MockScript(std::vector<MockRule> rules, std::uint64_t seed) : rules_(std::move(rules)), seed_(seed) {
  if (rules_.empty()) {
    throw ValidationError("mock script needs at least one rule");
  }
  if (!rules_.back().catch_all()) {
    throw ValidationError("mock script must end with a catch-all rule");
  }
  for (const auto& rule : rules_) {
    if (!rule.reply) throw ValidationError("mock rule has no reply");
  }
}

std::string MockScript::reply(const ChatRequest& request) const {
  const std::string prompt = flat_prompt(request.messages);
  const std::uint64_t draw =
      mix_seed(mix_seed(seed_, fnv1a64(request_digest(request))), static_cast<std::uint64_t>(request.sample_index));
  std::mt19937_64 rng(draw);
  const MockCall call{prompt, request, draw, rng};
  for (const auto& rule : rules_) {
    if (rule.catch_all() || rule.matches(prompt)) return rule.reply(call);
  }
  throw RuntimeError("mock script: no rule matched");  // unreachable with a catch-all
}

void BackendConfig::validate() const {
  if (backend_id.empty()) throw ValidationError("backend_id must not be empty");
  if (!std::isfinite(temperature) || temperature < 0.0) {
    throw ValidationError(fmt::format("backend '{}': temperature must be finite and >= 0", backend_id));
  }
  if (max_tokens < 1) throw ValidationError(fmt::format("backend '{}': max_tokens must be positive", backend_id));
  if (retry.max_attempts < 1) {
    throw ValidationError(fmt::format("backend '{}': retry.max_attempts must be >= 1", backend_id));
  }
  if (timeout.count() <= 0) throw ValidationError(fmt::format("backend '{}': timeout must be positive", backend_id));
  if (kind == Kind::Remote) {
    Endpoint::parse(base_url);
    if (model_name.empty()) throw ValidationError(fmt::format("backend '{}': model_name is required", backend_id));
  } else if (!mock) {
    throw ValidationError(fmt::format("backend '{}': mock backend has no script", backend_id));
  }
}

BackendConfig mock_script(std::vector<MockRule> rules, std::uint64_t seed, std::string backend_id,
                          std::string model_name) {
  BackendConfig config;
  config.backend_id = std::move(backend_id);
  config.kind = BackendConfig::Kind::Mock;
  config.model_name = std::move(model_name);
  config.mock = std::make_shared<MockScript>(std::move(rules), seed);
  return config;
}

// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
  if (std::filesystem::exists(*path_)) {
    const auto text = read_file(*path_);
    for (const auto& line : split_lines(text)) {
      if (trim(line).empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        CachedResponse entry;
        entry.backend_id = j.at("backend_id").get<std::string>();
        entry.request_digest = j.at("request_digest").get<std::string>();
        entry.text = j.at("text").get<std::string>();
        if (j.contains("usage")) {
          entry.prompt_tokens = j["usage"].value("prompt_tokens", 0);
          entry.completion_tokens = j["usage"].value("completion_tokens", 0);
        }
        entries_[j.at("key").get<std::string>()] = std::move(entry);
      } catch (const nlohmann::json::exception&) {
        // Partial line from an interrupted append.
      }
    }
    // Keep appends on a fresh line if the file ends mid-record.
    if (!text.empty() && text.back() != '\n') {
      std::ofstream fix(*path_, std::ios::app);
      fix << '\n';
    }
  }
  out_.open(*path_, std::ios::app);
  if (!out_) {
    throw RuntimeError(fmt::format("cannot open cache file {}", path_->string()));
  }
}

std::optional<CachedResponse> ResponseCache::lookup(const std::string& key) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::store(const std::string& key, const CachedResponse& entry) {
  std::unique_lock lock(mutex_);
  entries_[key] = entry;
  if (out_.is_open()) {
    nlohmann::ordered_json j;
    j["key"] = key;
    j["backend_id"] = entry.backend_id;
    j["request_digest"] = entry.request_digest;
    j["text"] = entry.text;
    j["usage"] = {{"prompt_tokens", entry.prompt_tokens}, {"completion_tokens", entry.completion_tokens}};
    j["timestamp"] = utc_timestamp();
    out_ << j.dump() << '\n';
    out_.flush();
    if (!out_) throw RuntimeError(fmt::format("cache write failed: {}", path_->string()));
  }
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

// ---------------------------------------------------------------------------

void Gateway::Limiter::acquire() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return active_ < limit_; });
  ++active_;
}

void Gateway::Limiter::release() {
  {
    std::lock_guard lock(mutex_);
    --active_;
  }
  cv_.notify_one();
}

Gateway::Gateway(std::shared_ptr<ResponseCache> cache, std::size_t max_in_flight)
    : cache_(std::move(cache)), max_in_flight_(max_in_flight) {
  if (max_in_flight_ == 0) {
    throw ValidationError("max_in_flight must be at least 1");
  }
}

Gateway::Limiter& Gateway::limiter_for(const std::string& backend_id) {
  std::lock_guard lock(limiter_mutex_);
  auto& slot = limiters_[backend_id];
  if (!slot) slot = std::make_unique<Limiter>(max_in_flight_);
  return *slot;
}

std::uint64_t Gateway::backend_calls(const std::string& backend_id) const {
  std::lock_guard lock(counter_mutex_);
  const auto it = per_backend_calls_.find(backend_id);
  return it == per_backend_calls_.end() ? 0 : it->second;
}

std::string chat_request_body(const ChatRequest& request, const BackendConfig& backend) {
  nlohmann::ordered_json body;
  body["model"] = backend.model_name;
  nlohmann::ordered_json messages = nlohmann::ordered_json::array();
  for (const auto& m : request.messages) {
    nlohmann::ordered_json msg;
    msg["role"] = to_string(m.role);
    msg["content"] = m.content;
    messages.push_back(std::move(msg));
  }
  body["messages"] = std::move(messages);
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  return body.dump();
}

ChatResponse parse_chat_response_body(std::string_view body) {
  ChatResponse out;
  try {
    const auto j = nlohmann::json::parse(body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    out.text = content.is_null() ? std::string() : content.get<std::string>();
    if (j.contains("usage") && j["usage"].is_object()) {
      out.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      out.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeError(fmt::format("malformed chat completion response: {}", e.what()));
  }
  return out;
}

ChatResponse Gateway::call_backend(const ChatRequest& request, const BackendConfig& backend) {
  if (backend.kind == BackendConfig::Kind::Mock) {
    ChatResponse out;
    out.text = backend.mock->reply(request);
    out.prompt_tokens = word_count(flat_prompt(request.messages));
    out.completion_tokens = word_count(out.text);
    return out;
  }
  std::string token;
  if (!backend.api_key_env.empty()) {
    if (const char* value = std::getenv(backend.api_key_env.c_str())) token = value;
  }
  const auto result = post_json(Endpoint::parse(backend.base_url), "/chat/completions",
                                chat_request_body(request, backend), token, backend.timeout, backend.retry);
  if (result.status < 200 || result.status > 299) {
    throw RuntimeError(fmt::format("backend '{}' returned HTTP {}: {}", backend.backend_id, result.status,
                                   result.body.substr(0, 200)));
  }
  return parse_chat_response_body(result.body);
}

ChatResponse Gateway::complete(const ChatRequest& request, const BackendConfig& backend) {
  if (request.messages.empty()) {
    throw ValidationError("chat request has no messages");
  }
  if (request.max_tokens < 1) {
    throw ValidationError("chat request max_tokens must be positive");
  }
  ++requests_;
  const auto start = std::chrono::steady_clock::now();
  std::string key;
  if (cache_) {
    key = cache_key(request, backend);
    if (auto hit = cache_->lookup(key)) {
      ++cache_hits_;
      ChatResponse out;
      out.text = std::move(hit->text);
      out.prompt_tokens = hit->prompt_tokens;
      out.completion_tokens = hit->completion_tokens;
      out.backend_id = backend.backend_id;
      out.from_cache = true;
      return out;
    }
  }

  auto& limiter = limiter_for(backend.backend_id);
  limiter.acquire();
  ChatResponse out;
  try {
    ++backend_calls_;
    {
      std::lock_guard lock(counter_mutex_);
      ++per_backend_calls_[backend.backend_id];
    }
    out = call_backend(request, backend);
  } catch (...) {
    limiter.release();
    throw;
  }
  limiter.release();

  out.backend_id = backend.backend_id;
  out.from_cache = false;
  out.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  if (cache_) {
    cache_->store(key, CachedResponse{backend.backend_id, request_digest(request), out.text, out.prompt_tokens,
                                      out.completion_tokens});
  }
  return out;
}

std::vector<BatchItem> Gateway::complete_batch(const std::vector<ChatRequest>& requests, const BackendConfig& backend,
                                               std::size_t max_in_flight) {
  if (max_in_flight == 0) {
    throw ValidationError("max_in_flight must be at least 1");
  }
  std::vector<BatchItem> results(requests.size());
  if (requests.empty()) return results;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      try {
        results[i].response = complete(requests[i], backend);
      } catch (const std::exception& e) {
        results[i].error = e.what();
      }
    }
  };
  {
    const std::size_t threads = std::min(max_in_flight, requests.size());
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return results;
}

}  // namespace rdc
