#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdc/corpus.hpp"
#include "rdc/embedding.hpp"
#include "rdc/gateway.hpp"
#include "rdc/orchestrator.hpp"
#include "rdc/synthetic.hpp"

namespace rdc {

/// Where a split comes from. `labels` names a bundled label set or lists
/// labels explicitly; named adapters bring their own.
struct DatasetSource {
  std::filesystem::path path;
  Adapter adapter = Adapter::Jsonl;
  std::optional<LabelSet> labels;

  DatasetSplit load(SplitName split) const;
};

struct MockRuleSpec {
  std::optional<std::string> contains;
  std::optional<std::string> regex;
  std::string reply;
};

struct BackendSpec {
  BackendConfig config;  // mock script filled in by resolve_backend
  std::uint64_t mock_seed = 0;
  std::vector<MockRuleSpec> rules;
  std::optional<SyntheticAnnotatorSpec> synthetic;
  bool timeout_set = false;
};

struct PlanSpec {
  Strategy strategy = Strategy::RDC;
  std::optional<std::size_t> k;
  int rounds = 3;
  int usc_samples = 3;
  std::optional<Retrieval> retrieval;
  std::uint64_t seed = 0;
  std::optional<double> temperature_single;
  double temperature_usc = 0.7;
  std::vector<std::string> backend_ids;
  bool lenient_parser = false;
  std::optional<std::size_t> limit;
};

/// The single JSON config file:
///   backends[], embedding_provider, datasets{pool, eval, index},
///   plan{strategy, k, rounds, usc_samples, retrieval, seed, temperatures,
///        backends, lenient_parser, limit},
///   limits{max_in_flight, timeout_ms}, output_dir, cache, run_id
/// Relative paths resolve against the config file's directory. Secrets are
/// only ever named (api_key_env), never stored.
struct AppConfig {
  std::vector<BackendSpec> backends;
  EmbeddingProviderConfig embedding;
  std::optional<DatasetSource> pool;
  std::optional<DatasetSource> eval;
  std::optional<std::filesystem::path> index_path;
  PlanSpec plan;
  std::size_t max_in_flight = 8;
  std::optional<std::chrono::milliseconds> timeout;
  std::filesystem::path output_dir = "runs/default";
  std::optional<std::filesystem::path> cache_path;
  std::optional<std::string> run_id;

  static AppConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static AppConfig load(const std::filesystem::path& path);
};

/// Builds the runtime backend, including its mock script. Synthetic mocks
/// need the eval split for gold labels.
BackendConfig resolve_backend(const BackendSpec& spec, const DatasetSplit* eval);

}  // namespace rdc
