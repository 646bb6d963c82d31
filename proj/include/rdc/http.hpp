#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace rdc {

/// Base URL split into the part httplib connects to and the path prefix
/// prepended to every request path.
struct Endpoint {
  std::string scheme_host_port;
  std::string path_prefix;

  static Endpoint parse(std::string_view base_url);
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{200};
};

struct HttpResult {
  int status = 0;
  std::string body;
  int attempts = 0;
};

/// Retryable: transport failures, 5xx and 429. Other statuses are returned to
/// the caller on the first attempt.
bool is_retryable_status(int status);

/// POSTs a JSON body, retrying with exponential backoff (base * 2^(attempt-1)).
/// The same body is sent on every attempt. Throws RuntimeError when every
/// attempt fails with a transport error or a retryable status.
HttpResult post_json(const Endpoint& endpoint, std::string_view path, const std::string& body,
                     const std::string& bearer_token, std::chrono::milliseconds timeout, const RetryPolicy& retry);

}  // namespace rdc
