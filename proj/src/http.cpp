#include "rdc/http.hpp"

#include <regex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "rdc/error.hpp"

namespace rdc {

Endpoint Endpoint::parse(std::string_view base_url) {
  static const std::regex pattern(R"(^(https?)://([^/\s?#]+)(/[^\s?#]*)?$)");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(base_url.begin(), base_url.end(), m, pattern)) {
    throw ValidationError(fmt::format("invalid base_url '{}'", base_url));
  }
  Endpoint out;
  out.scheme_host_port = m[1].str() + "://" + m[2].str();
  out.path_prefix = m[3].matched ? m[3].str() : "";
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

bool is_retryable_status(int status) { return status == 429 || (status >= 500 && status <= 599); }

HttpResult post_json(const Endpoint& endpoint, std::string_view path, const std::string& body,
                     const std::string& bearer_token, std::chrono::milliseconds timeout, const RetryPolicy& retry) {
  if (retry.max_attempts < 1) {
    throw ValidationError("retry.max_attempts must be at least 1");
  }
  httplib::Client client(endpoint.scheme_host_port);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());
  httplib::Headers headers;
  if (!bearer_token.empty()) {
    headers.emplace("Authorization", "Bearer " + bearer_token);
  }
  const std::string full_path = endpoint.path_prefix + std::string(path);

  std::string last_error;
  for (int attempt = 1; attempt <= retry.max_attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(retry.backoff_base * (1LL << (attempt - 2)));
    }
    auto res = client.Post(full_path, headers, body, "application/json");
    if (!res) {
      last_error = fmt::format("transport error: {}", httplib::to_string(res.error()));
      continue;
    }
    if (is_retryable_status(res->status)) {
      last_error = fmt::format("HTTP {}: {}", res->status, res->body.substr(0, 200));
      continue;
    }
    return HttpResult{res->status, res->body, attempt};
  }
  throw RuntimeError(fmt::format("POST {}{} failed after {} attempt(s): {}", endpoint.scheme_host_port, full_path,
                                 retry.max_attempts, last_error));
}

}  // namespace rdc
