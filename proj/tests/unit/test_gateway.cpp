#include <doctest.h>

#include <cstdlib>
#include <set>
#include <thread>

#include "rdc/error.hpp"
#include "rdc/gateway.hpp"
#include "stub_server.hpp"
#include "support.hpp"

using namespace rdc;
using rdc::test::StubChatServer;

namespace {

ChatRequest request(const std::string& text, int sample_index = 0, double temperature = 0.0) {
  ChatRequest r;
  r.messages = {{Role::System, "You label sentences."}, {Role::User, text}};
  r.sample_index = sample_index;
  r.temperature = temperature;
  r.max_tokens = 64;
  return r;
}

BackendConfig remote(const std::string& base_url, const std::string& id = "remote") {
  BackendConfig b;
  b.backend_id = id;
  b.kind = BackendConfig::Kind::Remote;
  b.base_url = base_url;
  b.model_name = "stub-model";
  b.timeout = std::chrono::milliseconds(5000);
  b.retry = {3, std::chrono::milliseconds(1)};
  return b;
}

}  // namespace

TEST_CASE("mock backend echoes scripted text") {
  Gateway gateway;
  const auto backend = mock_script({MockRule::always("Artist\nThe text describes a singer.")});
  CHECK(gateway.complete(request("anything"), backend).text == "Artist\nThe text describes a singer.");
  CHECK(gateway.backend_calls() == 1);
}

TEST_CASE("mock rules: first match wins, catch-all required") {
  const auto backend = mock_script({MockRule::contains("Moby-Dick", "WrittenWork\nnovel"),
                                    MockRule::contains("Moby", "Animal\nwhale"), MockRule::always("Film\ndefault")});
  Gateway gateway;
  CHECK(gateway.complete(request("Moby-Dick by Melville"), backend).text == "WrittenWork\nnovel");
  CHECK(gateway.complete(request("Moby the whale"), backend).text == "Animal\nwhale");
  CHECK(gateway.complete(request("Jaws"), backend).text == "Film\ndefault");
  CHECK_THROWS_AS(MockScript({}, 0), ValidationError);
  CHECK_THROWS_AS(MockScript({MockRule::contains("x", "y")}, 0), ValidationError);
}

TEST_CASE("mock: gold-if-contains rule is deterministic") {
  const auto backend = mock_script(
      {MockRule::contains("great", "positive\npraise"), MockRule::always("negative\nno praise")}, 3);
  Gateway a, b;
  for (const auto* text : {"a great film", "a dull film", "great great"}) {
    CHECK(a.complete(request(text), backend).text == b.complete(request(text), backend).text);
  }
}

TEST_CASE("mock: noisy rule probabilities") {
  SUBCASE("probability 1 always answers correctly") {
    const auto backend = mock_script({MockRule::noisy({}, "gold", {"wrong"}, 1.0)}, 17);
    Gateway gateway;
    for (int i = 0; i < 500; ++i) CHECK(gateway.complete(request("q", i), backend).text == "gold");
  }
  SUBCASE("probability 0.6 over 10000 seeded draws") {
    const auto backend = mock_script({MockRule::noisy({}, "gold", {"w1", "w2", "w3"}, 0.6)}, 42);
    Gateway gateway;
    int correct = 0;
    std::set<std::string> wrong_seen;
    for (int i = 0; i < 10000; ++i) {
      const auto text = gateway.complete(request("item " + std::to_string(i)), backend).text;
      if (text == "gold") {
        ++correct;
      } else {
        wrong_seen.insert(text);
      }
    }
    CHECK(std::abs(correct / 10000.0 - 0.6) <= 0.02);
    CHECK(wrong_seen == std::set<std::string>{"w1", "w2", "w3"});
  }
  SUBCASE("a mock is a pure function of (rules, digest, sample_index, seed)") {
    const auto b1 = mock_script({MockRule::noisy({}, "gold", {"wrong"}, 0.5)}, 9);
    const auto b2 = mock_script({MockRule::noisy({}, "gold", {"wrong"}, 0.5)}, 9);
    const auto b3 = mock_script({MockRule::noisy({}, "gold", {"wrong"}, 0.5)}, 10);
    int differs = 0;
    for (int i = 0; i < 200; ++i) {
      const auto r = request("x", i);
      CHECK(b1.mock->reply(r) == b2.mock->reply(r));
      differs += b1.mock->reply(r) != b3.mock->reply(r);
    }
    CHECK(differs > 0);
  }
  CHECK_THROWS_AS(MockRule::noisy({}, "gold", {"w"}, 1.5), ValidationError);
}

TEST_CASE("cache keys") {
  const auto backend = mock_script({MockRule::always("x")}, 0, "m", "model-a");
  const auto base = request("hello");
  CHECK(cache_key(base, backend) == cache_key(request("hello"), backend));
  CHECK(cache_key(base, backend) != cache_key(request("hello", 1), backend));
  CHECK(cache_key(base, backend) != cache_key(request("hello", 0, 0.7), backend));
  auto other_tokens = base;
  other_tokens.max_tokens = 65;
  CHECK(cache_key(base, backend) != cache_key(other_tokens, backend));
  auto other_backend = backend;
  other_backend.backend_id = "m2";
  CHECK(cache_key(base, backend) != cache_key(base, other_backend));
  auto other_model = backend;
  other_model.model_name = "model-b";
  CHECK(cache_key(base, backend) != cache_key(base, other_model));
  auto swapped_roles = base;
  swapped_roles.messages[0].role = Role::User;
  CHECK(cache_key(base, backend) != cache_key(swapped_roles, backend));
}

TEST_CASE("sample_index keeps independent draws apart in the cache") {
  rdc::test::TempDir dir;
  auto cache = std::make_shared<ResponseCache>(dir / "cache.jsonl");
  Gateway gateway(cache);
  const auto backend = mock_script({MockRule::noisy({}, "A", {"B"}, 0.5)}, 1);
  const auto r0 = gateway.complete(request("same prompt", 0, 0.7), backend);
  const auto r1 = gateway.complete(request("same prompt", 1, 0.7), backend);
  CHECK(cache->size() == 2);
  CHECK(gateway.backend_calls() == 2);
  CHECK(gateway.complete(request("same prompt", 0, 0.7), backend).text == r0.text);
  CHECK(gateway.complete(request("same prompt", 1, 0.7), backend).text == r1.text);
  CHECK(gateway.backend_calls() == 2);
  CHECK(gateway.cache_hits() == 2);
}

TEST_CASE("response cache persists and tolerates a torn last line") {
  rdc::test::TempDir dir;
  const auto backend = mock_script({MockRule::always("negative\nbecause")}, 0, "m");
  {
    Gateway gateway(std::make_shared<ResponseCache>(dir / "cache.jsonl"));
    gateway.complete(request("one"), backend);
    gateway.complete(request("two"), backend);
  }
  {
    std::ofstream out(dir / "cache.jsonl", std::ios::app);
    out << R"({"key":"abc","backend_id":"m","te)";
  }
  Gateway gateway(std::make_shared<ResponseCache>(dir / "cache.jsonl"));
  const auto hit = gateway.complete(request("one"), backend);
  CHECK(hit.from_cache);
  CHECK(hit.text == "negative\nbecause");
  CHECK(gateway.backend_calls() == 0);

  const auto content = read_file(dir / "cache.jsonl");
  const auto first = nlohmann::json::parse(content.substr(0, content.find('\n')));
  for (const auto* field : {"key", "backend_id", "request_digest", "text", "usage", "timestamp"}) {
    CHECK(first.contains(field));
  }
}

TEST_CASE("empty replies are returned, not dropped") {
  Gateway gateway;
  const auto backend = mock_script({MockRule::always("")});
  CHECK(gateway.complete(request("x"), backend).text.empty());
}

TEST_CASE("complete_batch") {
  Gateway gateway;
  SUBCASE("empty input") {
    CHECK(gateway.complete_batch({}, mock_script({MockRule::always("x")}), 8).empty());
  }
  SUBCASE("aligned results and bounded concurrency") {
    std::atomic<int> active{0}, peak{0};
    MockRule probe{{}, [&](const MockCall& call) {
                     const int now = ++active;
                     int seen = peak.load();
                     while (now > seen && !peak.compare_exchange_weak(seen, now)) {
                     }
                     std::this_thread::sleep_for(std::chrono::milliseconds(2));
                     --active;
                     return std::string(call.prompt.substr(call.prompt.rfind(' ') + 1));
                   }};
    const auto backend = mock_script({probe});
    std::vector<ChatRequest> requests;
    for (int i = 0; i < 100; ++i) requests.push_back(request("echo " + std::to_string(i)));
    Gateway wide(nullptr, 64);
    const auto results = wide.complete_batch(requests, backend, 8);
    REQUIRE(results.size() == 100);
    for (int i = 0; i < 100; ++i) {
      REQUIRE(results[i].response);
      CHECK(results[i].response->text == std::to_string(i));
    }
    CHECK(peak.load() <= 8);
    CHECK(peak.load() >= 1);
  }
  SUBCASE("the gateway-wide bound also applies across batches") {
    std::atomic<int> active{0}, peak{0};
    MockRule probe{{}, [&](const MockCall&) {
                     const int now = ++active;
                     int seen = peak.load();
                     while (now > seen && !peak.compare_exchange_weak(seen, now)) {
                     }
                     std::this_thread::sleep_for(std::chrono::milliseconds(2));
                     --active;
                     return std::string("ok");
                   }};
    const auto backend = mock_script({probe});
    Gateway narrow(nullptr, 3);
    std::vector<ChatRequest> requests;
    for (int i = 0; i < 40; ++i) requests.push_back(request(std::to_string(i)));
    std::thread t1([&] { narrow.complete_batch(requests, backend, 16); });
    std::thread t2([&] { narrow.complete_batch(requests, backend, 16); });
    t1.join();
    t2.join();
    CHECK(peak.load() <= 3);
  }
  SUBCASE("per-position failures") {
    BackendConfig broken = remote("http://127.0.0.1:1/v1", "dead");
    broken.retry = {1, std::chrono::milliseconds(1)};
    broken.timeout = std::chrono::milliseconds(200);
    std::vector<ChatRequest> requests{request("a"), request("b")};
    const auto results = gateway.complete_batch(requests, broken, 2);
    REQUIRE(results.size() == 2);
    CHECK_FALSE(results[0].response);
    CHECK_FALSE(results[0].error.empty());
    CHECK_FALSE(results[1].response);
  }
  CHECK_THROWS_AS(gateway.complete_batch({request("a")}, mock_script({MockRule::always("x")}), 0), ValidationError);
}

TEST_CASE("remote backend: wire protocol, cache, retries") {
  std::atomic<int> failures_left{0};
  std::atomic<int> status_on_failure{500};
  StubChatServer server([&](const nlohmann::json& body) -> std::pair<int, std::string> {
    if (failures_left > 0) {
      --failures_left;
      return {status_on_failure.load(), R"({"error":"try later"})"};
    }
    const auto& last = body.at("messages").back().at("content").get<std::string>();
    return {200, StubChatServer::reply_body("positive\necho: " + last)};
  });
  auto backend = remote(server.base_url());

  SUBCASE("request body shape and bearer token") {
    ::setenv("RDC_TEST_KEY", "sekret", 1);
    backend.api_key_env = "RDC_TEST_KEY";
    Gateway gateway;
    const auto out = gateway.complete(request("hello there"), backend);
    CHECK(out.text == "positive\necho: hello there");
    CHECK(out.prompt_tokens == 11);
    CHECK(out.completion_tokens == 3);
    CHECK_FALSE(out.from_cache);
    const auto body = nlohmann::json::parse(server.bodies().back());
    CHECK(body.at("model") == "stub-model");
    CHECK(body.at("messages").size() == 2);
    CHECK(body.at("messages")[0].at("role") == "system");
    CHECK(body.at("temperature") == 0.0);
    CHECK(body.at("max_tokens") == 64);
    CHECK(server.authorizations().back() == "Bearer sekret");
    ::unsetenv("RDC_TEST_KEY");
  }
  SUBCASE("no Authorization header when the key is empty") {
    backend.api_key_env = "RDC_TEST_KEY_UNSET";
    Gateway gateway;
    gateway.complete(request("x"), backend);
    CHECK(server.authorizations().back().empty());
  }
  SUBCASE("second identical request is served from cache") {
    Gateway gateway(std::make_shared<ResponseCache>());
    const auto first = gateway.complete(request("cache me"), backend);
    const auto second = gateway.complete(request("cache me"), backend);
    CHECK_FALSE(first.from_cache);
    CHECK(second.from_cache);
    CHECK(second.text == first.text);
    CHECK(server.calls() == 1);
  }
  SUBCASE("5xx and 429 are retried with an identical body") {
    for (int status : {500, 503, 429}) {
      failures_left = 2;
      status_on_failure = status;
      Gateway gateway;
      const int before = server.calls();
      CHECK(gateway.complete(request("retry " + std::to_string(status)), backend).text.starts_with("positive"));
      CHECK(server.calls() - before == 3);
      const auto bodies = server.bodies();
      CHECK(bodies[bodies.size() - 1] == bodies[bodies.size() - 2]);
      CHECK(bodies[bodies.size() - 2] == bodies[bodies.size() - 3]);
    }
  }
  SUBCASE("retries exhausted") {
    failures_left = 5;
    status_on_failure = 502;
    Gateway gateway;
    CHECK_THROWS_AS(gateway.complete(request("x"), backend), RuntimeError);
    failures_left = 0;
  }
  SUBCASE("4xx other than 429 is not retried") {
    failures_left = 1;
    status_on_failure = 400;
    Gateway gateway;
    const int before = server.calls();
    try {
      gateway.complete(request("bad"), backend);
      FAIL("expected an error");
    } catch (const RuntimeError& e) {
      CHECK(std::string(e.what()).find("400") != std::string::npos);
      CHECK(std::string(e.what()).find("try later") != std::string::npos);
    }
    CHECK(server.calls() - before == 1);
  }
}

TEST_CASE("remote backend: malformed body") {
  StubChatServer server([](const nlohmann::json&) -> std::pair<int, std::string> { return {200, R"({"choices":[]})"}; });
  Gateway gateway;
  CHECK_THROWS_AS(gateway.complete(request("x"), remote(server.base_url())), RuntimeError);
  CHECK_THROWS_AS(parse_chat_response_body("not json"), RuntimeError);
  const auto ok = parse_chat_response_body(R"({"choices":[{"message":{"content":"hi"}}]})");
  CHECK(ok.text == "hi");
  CHECK(ok.prompt_tokens == 0);
}

TEST_CASE("complete does not mutate the request and validates it") {
  Gateway gateway;
  const auto backend = mock_script({MockRule::always("x")});
  const auto r = request("immutable");
  const auto copy = r;
  gateway.complete(r, backend);
  CHECK(r.messages == copy.messages);
  CHECK_THROWS_AS(gateway.complete(ChatRequest{}, backend), ValidationError);
}

TEST_CASE("backend config validation") {
  BackendConfig b = remote("not a url");
  CHECK_THROWS_AS(b.validate(), ValidationError);
  b = remote("http://localhost:8000/v1");
  CHECK_NOTHROW(b.validate());
  b.temperature = NAN;
  CHECK_THROWS_AS(b.validate(), ValidationError);
  b = remote("http://localhost:8000/v1");
  b.retry.max_attempts = 0;
  CHECK_THROWS_AS(b.validate(), ValidationError);
  CHECK(Endpoint::parse("https://api.example.com/v1").path_prefix == "/v1");
  CHECK(Endpoint::parse("http://127.0.0.1:8080").scheme_host_port == "http://127.0.0.1:8080");
}
