#include "rdc/config.hpp"

#include <regex>

#include <fmt/format.h>

#include "rdc/error.hpp"
#include "rdc/util.hpp"

namespace rdc {

DatasetSplit DatasetSource::load(SplitName split) const {
  if (adapter == Adapter::Jsonl) {
    if (!labels) throw ValidationError(fmt::format("{}: jsonl datasets need 'labels'", path.string()));
    return load_dataset(path, adapter, split, &*labels);
  }
  return load_dataset(path, adapter, split);
}

namespace {

using nlohmann::json;

std::filesystem::path resolve_path(const std::string& raw, const std::filesystem::path& base) {
  std::filesystem::path p(raw);
  return p.is_absolute() ? p : base / p;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, std::string_view where) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception&) {
    throw ValidationError(fmt::format("config: {}.{} has the wrong type", where, key));
  }
}

LabelSet parse_labels(const json& j, std::string_view where) {
  if (j.is_string()) return bundled_label_set(j.get<std::string>());
  if (j.is_array()) {
    return LabelSet("custom", j.get<std::vector<std::string>>());
  }
  if (j.is_object()) {
    return LabelSet(j.value("dataset_id", std::string("custom")), j.at("labels").get<std::vector<std::string>>());
  }
  throw ValidationError(fmt::format("config: {}.labels must be a name, a list or an object", where));
}

DatasetSource parse_source(const json& j, const std::filesystem::path& base, std::string_view where) {
  if (!j.is_object() || !j.contains("path")) {
    throw ValidationError(fmt::format("config: datasets.{} needs a path", where));
  }
  DatasetSource src;
  src.path = resolve_path(j["path"].get<std::string>(), base);
  src.adapter = parse_adapter(get_or<std::string>(j, "adapter", "jsonl", where));
  if (j.contains("labels")) src.labels = parse_labels(j["labels"], where);
  return src;
}

BackendSpec parse_backend(const json& j, const std::filesystem::path& base) {
  (void)base;
  BackendSpec spec;
  auto& c = spec.config;
  c.backend_id = get_or<std::string>(j, "id", "", "backends[]");
  if (c.backend_id.empty()) throw ValidationError("config: every backend needs an id");
  const auto kind = get_or<std::string>(j, "kind", "remote", c.backend_id);
  if (kind == "remote") {
    c.kind = BackendConfig::Kind::Remote;
  } else if (kind == "mock") {
    c.kind = BackendConfig::Kind::Mock;
  } else {
    throw ValidationError(fmt::format("config: backend '{}' has unknown kind '{}'", c.backend_id, kind));
  }
  c.base_url = get_or<std::string>(j, "base_url", "", c.backend_id);
  c.model_name = get_or<std::string>(j, "model", c.kind == BackendConfig::Kind::Mock ? "mock" : "", c.backend_id);
  c.temperature = get_or<double>(j, "temperature", 0.0, c.backend_id);
  c.max_tokens = get_or<int>(j, "max_tokens", 512, c.backend_id);
  if (j.contains("timeout_ms")) {
    c.timeout = std::chrono::milliseconds(get_or<long long>(j, "timeout_ms", 60000, c.backend_id));
    spec.timeout_set = true;
  }
  if (j.contains("retry")) {
    c.retry.max_attempts = get_or<int>(j["retry"], "max_attempts", 3, c.backend_id);
    c.retry.backoff_base = std::chrono::milliseconds(get_or<long long>(j["retry"], "backoff_base_ms", 200, c.backend_id));
  }
  c.api_key_env = get_or<std::string>(j, "api_key_env", "", c.backend_id);
  spec.mock_seed = get_or<std::uint64_t>(j, "seed", 0, c.backend_id);
  if (j.contains("rules")) {
    for (const auto& r : j["rules"]) {
      MockRuleSpec rule;
      if (r.contains("contains")) rule.contains = r["contains"].get<std::string>();
      if (r.contains("regex")) rule.regex = r["regex"].get<std::string>();
      rule.reply = get_or<std::string>(r, "reply", "", c.backend_id);
      spec.rules.push_back(std::move(rule));
    }
  }
  if (j.contains("synthetic")) {
    SyntheticAnnotatorSpec s;
    s.p_bare = get_or<double>(j["synthetic"], "p_bare", 0.6, c.backend_id);
    s.p_primed = get_or<double>(j["synthetic"], "p_primed", 0.8, c.backend_id);
    spec.synthetic = s;
  }
  if (c.kind == BackendConfig::Kind::Mock && spec.rules.empty() && !spec.synthetic) {
    throw ValidationError(fmt::format("config: mock backend '{}' needs rules or synthetic", c.backend_id));
  }
  return spec;
}

}  // namespace

AppConfig AppConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  AppConfig cfg;
  try {
    if (j.contains("backends")) {
      for (const auto& b : j["backends"]) cfg.backends.push_back(parse_backend(b, base_dir));
    }
    if (j.contains("embedding_provider")) {
      const auto& e = j["embedding_provider"];
      const auto kind = get_or<std::string>(e, "kind", "hashed", "embedding_provider");
      if (kind == "hashed") {
        cfg.embedding.kind = EmbeddingProviderConfig::Kind::Hashed;
      } else if (kind == "remote") {
        cfg.embedding.kind = EmbeddingProviderConfig::Kind::Remote;
      } else {
        throw ValidationError(fmt::format("config: unknown embedding provider kind '{}'", kind));
      }
      cfg.embedding.dim = get_or<std::size_t>(e, "dim", cfg.embedding.kind == EmbeddingProviderConfig::Kind::Hashed ? 256 : 0,
                                             "embedding_provider");
      cfg.embedding.seed = get_or<std::uint64_t>(e, "seed", 0, "embedding_provider");
      cfg.embedding.base_url = get_or<std::string>(e, "base_url", "", "embedding_provider");
      cfg.embedding.model = get_or<std::string>(e, "model", "", "embedding_provider");
      cfg.embedding.api_key_env = get_or<std::string>(e, "api_key_env", "", "embedding_provider");
      cfg.embedding.timeout = std::chrono::milliseconds(get_or<long long>(e, "timeout_ms", 30000, "embedding_provider"));
    }
    if (j.contains("datasets")) {
      const auto& d = j["datasets"];
      if (d.contains("pool")) cfg.pool = parse_source(d["pool"], base_dir, "pool");
      if (d.contains("eval")) cfg.eval = parse_source(d["eval"], base_dir, "eval");
      if (d.contains("index") && d["index"].is_string()) {
        cfg.index_path = resolve_path(d["index"].get<std::string>(), base_dir);
      }
    }
    if (j.contains("plan")) {
      const auto& p = j["plan"];
      auto& plan = cfg.plan;
      plan.strategy = parse_strategy(get_or<std::string>(p, "strategy", "rdc", "plan"));
      if (p.contains("k") && !p["k"].is_null()) plan.k = get_or<std::size_t>(p, "k", 5, "plan");
      plan.rounds = get_or<int>(p, "rounds", 3, "plan");
      plan.usc_samples = get_or<int>(p, "usc_samples", 3, "plan");
      if (p.contains("retrieval") && !p["retrieval"].is_null()) {
        plan.retrieval = parse_retrieval(p["retrieval"].get<std::string>());
      }
      plan.seed = get_or<std::uint64_t>(p, "seed", 0, "plan");
      if (p.contains("temperatures")) {
        const auto& t = p["temperatures"];
        if (t.contains("single") && !t["single"].is_null()) plan.temperature_single = t["single"].get<double>();
        plan.temperature_usc = get_or<double>(t, "usc", 0.7, "plan.temperatures");
      }
      plan.backend_ids = get_or<std::vector<std::string>>(p, "backends", {}, "plan");
      plan.lenient_parser = get_or<bool>(p, "lenient_parser", false, "plan");
      if (p.contains("limit") && !p["limit"].is_null()) plan.limit = get_or<std::size_t>(p, "limit", 0, "plan");
    }
    if (j.contains("limits")) {
      cfg.max_in_flight = get_or<std::size_t>(j["limits"], "max_in_flight", 8, "limits");
      if (j["limits"].contains("timeout_ms")) {
        cfg.timeout = std::chrono::milliseconds(get_or<long long>(j["limits"], "timeout_ms", 60000, "limits"));
      }
    }
    if (j.contains("output_dir")) cfg.output_dir = resolve_path(j["output_dir"].get<std::string>(), base_dir);
    if (j.contains("cache") && j["cache"].is_string()) cfg.cache_path = resolve_path(j["cache"].get<std::string>(), base_dir);
    if (j.contains("run_id") && j["run_id"].is_string()) cfg.run_id = j["run_id"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("config: {}", e.what()));
  }
  if (cfg.max_in_flight == 0) throw ValidationError("config: limits.max_in_flight must be >= 1");
  for (auto& b : cfg.backends) {
    if (cfg.timeout && !b.timeout_set) b.config.timeout = *cfg.timeout;
  }
  return cfg;
}

AppConfig AppConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError(fmt::format("config file not found: {}", path.string()));
  const auto parsed = nlohmann::json::parse(read_file(path), nullptr, false);
  if (parsed.is_discarded()) throw ValidationError(fmt::format("config file is not valid JSON: {}", path.string()));
  return from_json(parsed, std::filesystem::absolute(path).parent_path());
}

BackendConfig resolve_backend(const BackendSpec& spec, const DatasetSplit* eval) {
  BackendConfig config = spec.config;
  if (config.kind == BackendConfig::Kind::Mock) {
    std::vector<MockRule> rules;
    for (const auto& r : spec.rules) {
      if (r.contains) {
        rules.push_back(MockRule::contains(*r.contains, r.reply));
      } else if (r.regex) {
        std::regex re;
        try {
          re = std::regex(*r.regex);
        } catch (const std::regex_error& e) {
          throw ValidationError(fmt::format("backend '{}': bad regex '{}': {}", config.backend_id, *r.regex, e.what()));
        }
        rules.push_back(MockRule{[re](std::string_view prompt) {
                                   return std::regex_search(prompt.begin(), prompt.end(), re);
                                 },
                                 [text = r.reply](const MockCall&) { return text; }});
      } else {
        rules.push_back(MockRule::always(r.reply));
      }
    }
    if (spec.synthetic) {
      if (eval == nullptr) {
        throw ValidationError(fmt::format("backend '{}': synthetic annotator needs an eval split", config.backend_id));
      }
      rules.push_back(synthetic_annotator_rule(*eval, *spec.synthetic));
    }
    config.mock = std::make_shared<MockScript>(std::move(rules), spec.mock_seed);
  }
  config.validate();
  return config;
}

}  // namespace rdc
