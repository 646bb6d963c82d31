#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdc/corpus.hpp"
#include "rdc/embedding.hpp"
#include "rdc/gateway.hpp"
#include "rdc/outcome.hpp"
#include "rdc/parser.hpp"
#include "rdc/prompt.hpp"
#include "rdc/similarity.hpp"

namespace rdc {

enum class Retrieval { Random, Similar };

std::string_view to_string(Retrieval retrieval);
Retrieval parse_retrieval(std::string_view name);

struct RunPlan {
  std::string run_id;
  Strategy strategy = Strategy::RDC;
  std::size_t k_examples = 5;
  int rounds = 3;
  int usc_samples = 3;
  Retrieval retrieval = Retrieval::Similar;
  std::uint64_t seed = 0;
  /// Sampling temperature of USC's independent draws. Every other call uses
  /// the backend's own temperature.
  double usc_temperature = 0.7;
  /// RDC round i runs on backends[(i - 1) % size]; other strategies use backends[0].
  std::vector<BackendConfig> backends;
  ParserOptions parser;

  std::shared_ptr<const DatasetSplit> eval_split;
  std::shared_ptr<const DatasetSplit> pool;
  std::shared_ptr<const SimilarityIndex> index;
  std::shared_ptr<const EmbeddingProvider> embedder;

  /// Strategy defaults: similar retrieval for -simi strategies and RDC, no
  /// examples for ZS.
  static RunPlan defaults_for(Strategy strategy);

  void validate() const;
  /// Fully resolved plan as written into the run manifest.
  nlohmann::ordered_json to_json() const;
};

enum class RoundKind { Single, Sample, Aggregate, Collaborative };
std::string_view to_string(RoundKind kind);

struct RoundEntry {
  RoundKind kind = RoundKind::Single;
  int index = 1;
  int sample_index = 0;
  std::string backend_id;
  std::string prompt_digest;
  ChatResponse response;
  ParsedOutcome outcome;
  /// RDC: the predecessor did not parse, so "UNKNOWN" and its raw text were forwarded.
  bool previous_unparsed = false;
};

enum class RecordStatus { Ok, Failed };

struct AnnotationRecord {
  std::string example_id;
  Strategy strategy = Strategy::ZS;
  RecordStatus status = RecordStatus::Ok;
  std::string error;
  std::vector<RoundEntry> rounds;
  /// Last round's outcome (RDC), the aggregation outcome (USC), or the single
  /// outcome. Absent when the record failed before producing it.
  std::optional<ParsedOutcome> final;
  std::vector<std::string> retrieved_ids;
  std::chrono::milliseconds wall_time{0};
  /// Prompts issued for this record; written to the transcript, not the record.
  std::vector<RenderedPrompt> prompts;

  /// Deterministic serialization (no timings, no cache flags).
  nlohmann::ordered_json to_json() const;
  static AnnotationRecord from_json(const nlohmann::json& j);
};

class Orchestrator {
 public:
  Orchestrator(RunPlan plan, Gateway& gateway, PromptEngine engine = PromptEngine());

  const RunPlan& plan() const { return plan_; }

  /// In-context examples for `target`: seeded random draw or top-k similar
  /// pool items, never including the target's own id.
  std::vector<Example> retrieve(const Example& target) const;

  /// Dispatches on the plan's strategy. Gateway failures produce a failed
  /// record holding the rounds completed so far.
  AnnotationRecord annotate_one(const Example& example) const;
  AnnotationRecord run_rdc(const Example& example) const;
  AnnotationRecord run_usc(const Example& example) const;

 private:
  AnnotationRecord run_single(const Example& example) const;
  PromptContext base_context(const Example& example, std::vector<Example> examples) const;
  RoundEntry call(RoundKind kind, int index, const RenderedPrompt& prompt, const BackendConfig& backend,
                  double temperature, int sample_index) const;

  RunPlan plan_;
  Gateway& gateway_;
  PromptEngine engine_;
  std::unordered_map<std::string, std::size_t> pool_positions_;
};

struct RunOutputs {
  std::filesystem::path dir;
  std::filesystem::path manifest() const { return dir / "manifest.json"; }
  std::filesystem::path records() const { return dir / "records.jsonl"; }
  std::filesystem::path partial_records() const { return dir / "records.partial.jsonl"; }
  std::filesystem::path transcripts() const { return dir / "transcripts.jsonl"; }
  std::filesystem::path partial_transcripts() const { return dir / "transcripts.partial.jsonl"; }
  std::filesystem::path timings() const { return dir / "timings.jsonl"; }
};

inline constexpr const char* kCodeVersion = "0.1.0";

/// Annotates every eval example, concurrently up to the gateway's in-flight
/// bound. Writes the manifest before the first backend call, appends each
/// finished record to a progress file, and on completion writes records and
/// transcripts sorted by id/digest. Re-running over the same directory skips
/// records that already completed. Returns records ordered by example id.
std::vector<AnnotationRecord> run_dataset(const RunPlan& plan, Gateway& gateway, const std::filesystem::path& out_dir,
                                          const PromptEngine& engine = PromptEngine());

std::vector<AnnotationRecord> load_records(const std::filesystem::path& path);

}  // namespace rdc
