#include "rdc/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_set>

#include <fmt/format.h>

#include "rdc/error.hpp"
#include "rdc/util.hpp"

namespace rdc {

std::string_view to_string(Retrieval retrieval) { return retrieval == Retrieval::Random ? "random" : "similar"; }

Retrieval parse_retrieval(std::string_view name) {
  const auto key = to_lower_ascii(trim(name));
  if (key == "random") return Retrieval::Random;
  if (key == "similar") return Retrieval::Similar;
  throw ValidationError(fmt::format("unknown retrieval mode '{}' (expected random or similar)", name));
}

std::string_view to_string(RoundKind kind) {
  switch (kind) {
    case RoundKind::Single: return "single";
    case RoundKind::Sample: return "sample";
    case RoundKind::Aggregate: return "aggregate";
    case RoundKind::Collaborative: return "collaborative";
  }
  return "single";
}

namespace {

RoundKind parse_round_kind(std::string_view name) {
  for (auto kind : {RoundKind::Single, RoundKind::Sample, RoundKind::Aggregate, RoundKind::Collaborative}) {
    if (to_string(kind) == name) return kind;
  }
  throw ValidationError(fmt::format("unknown round kind '{}'", name));
}

}  // namespace

RunPlan RunPlan::defaults_for(Strategy strategy) {
  RunPlan plan;
  plan.strategy = strategy;
  plan.retrieval = prefers_similar_examples(strategy) ? Retrieval::Similar : Retrieval::Random;
  plan.k_examples = strategy == Strategy::ZS ? 0 : 5;
  return plan;
}

void RunPlan::validate() const {
  if (backends.empty()) throw ValidationError("run plan needs at least one backend");
  for (const auto& b : backends) b.validate();
  if (strategy == Strategy::ZS && k_examples != 0) {
    throw ValidationError("zero-shot plans take k_examples = 0");
  }
  if (strategy != Strategy::ZS && k_examples == 0) {
    throw ValidationError(fmt::format("{} needs k_examples >= 1", display_name(strategy)));
  }
  if (rounds < 1) throw ValidationError("rounds must be >= 1");
  if (usc_samples < 2) throw ValidationError("usc_samples must be >= 2");
  if (!std::isfinite(usc_temperature) || usc_temperature < 0.0) {
    throw ValidationError("usc_temperature must be finite and >= 0");
  }
  if (!eval_split) throw ValidationError("run plan has no eval split");
  if (strategy == Strategy::ZS) return;
  if (!pool || pool->examples.empty()) throw ValidationError("run plan needs a non-empty pool");
  for (const auto& ex : pool->examples) {
    if (!ex.gold_label) throw ValidationError(fmt::format("pool example '{}' has no gold label", ex.id));
  }
  if (pool->label_set != eval_split->label_set) {
    throw ValidationError("pool and eval splits use different label sets");
  }
  if (retrieval == Retrieval::Similar) {
    if (!index || !embedder) throw ValidationError("similar retrieval needs an index and an embedding provider");
    if (index->provider_id() != embedder->provider_id()) {
      throw ValidationError(fmt::format("index was built by '{}' but the plan embeds with '{}'", index->provider_id(),
                                        embedder->provider_id()));
    }
    std::unordered_set<std::string> pool_ids;
    for (const auto& ex : pool->examples) pool_ids.insert(ex.id);
    for (const auto& id : index->ids()) {
      if (!pool_ids.contains(id)) throw ValidationError(fmt::format("index entry '{}' is not in the pool", id));
    }
  }
}

namespace {

nlohmann::ordered_json split_json(const std::shared_ptr<const DatasetSplit>& split) {
  if (!split) return nullptr;
  nlohmann::ordered_json j;
  j["dataset_id"] = split->dataset_id;
  j["split"] = to_string(split->split);
  j["size"] = split->size();
  j["labels"] = split->label_set.labels();
  j["digest"] = sha256_hex(to_jsonl(*split));
  return j;
}

}  // namespace

nlohmann::ordered_json RunPlan::to_json() const {
  nlohmann::ordered_json j;
  j["run_id"] = run_id;
  j["strategy"] = display_name(strategy);
  j["k_examples"] = k_examples;
  j["rounds"] = rounds;
  j["usc_samples"] = usc_samples;
  j["retrieval"] = to_string(retrieval);
  j["seed"] = seed;
  j["usc_temperature"] = usc_temperature;
  j["parser_lenient"] = parser.lenient;
  nlohmann::ordered_json bs = nlohmann::ordered_json::array();
  for (const auto& b : backends) {
    nlohmann::ordered_json bj;
    bj["backend_id"] = b.backend_id;
    bj["kind"] = b.kind == BackendConfig::Kind::Remote ? "remote" : "mock";
    if (b.kind == BackendConfig::Kind::Remote) {
      bj["base_url"] = b.base_url;
      bj["api_key_env"] = b.api_key_env;
    } else {
      bj["mock_seed"] = b.mock ? b.mock->seed() : 0;
    }
    bj["model_name"] = b.model_name;
    bj["temperature"] = b.temperature;
    bj["max_tokens"] = b.max_tokens;
    bj["timeout_ms"] = b.timeout.count();
    bj["retry"] = {{"max_attempts", b.retry.max_attempts}, {"backoff_base_ms", b.retry.backoff_base.count()}};
    bs.push_back(std::move(bj));
  }
  j["backends"] = std::move(bs);
  j["eval"] = split_json(eval_split);
  j["pool"] = split_json(pool);
  j["index_provider"] = index ? nlohmann::ordered_json(index->provider_id()) : nlohmann::ordered_json(nullptr);
  j["index_size"] = index ? index->size() : 0;
  return j;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json outcome_json(const ParsedOutcome& o) {
  nlohmann::ordered_json j;
  j["label"] = o.label ? nlohmann::ordered_json(*o.label) : nlohmann::ordered_json(nullptr);
  j["rationale"] = o.rationale;
  j["status"] = o.ok() ? "ok" : "parse_failure";
  return j;
}

ParsedOutcome outcome_from_json(const nlohmann::json& j, const std::string& raw) {
  ParsedOutcome o;
  if (!j.at("label").is_null()) o.label = j["label"].get<std::string>();
  o.rationale = j.at("rationale").get<std::string>();
  o.status = j.at("status").get<std::string>() == "ok" ? ParseStatus::Ok : ParseStatus::ParseFailure;
  o.raw_text = raw;
  return o;
}

}  // namespace

nlohmann::ordered_json AnnotationRecord::to_json() const {
  nlohmann::ordered_json j;
  j["example_id"] = example_id;
  j["strategy"] = display_name(strategy);
  j["status"] = status == RecordStatus::Ok ? "ok" : "failed";
  if (status == RecordStatus::Failed) j["error"] = error;
  j["retrieved_ids"] = retrieved_ids;
  nlohmann::ordered_json rs = nlohmann::ordered_json::array();
  for (const auto& r : rounds) {
    nlohmann::ordered_json rj;
    rj["kind"] = to_string(r.kind);
    rj["index"] = r.index;
    rj["sample_index"] = r.sample_index;
    rj["backend_id"] = r.backend_id;
    rj["prompt_digest"] = r.prompt_digest;
    rj["response"] = {{"text", r.response.text},
                      {"prompt_tokens", r.response.prompt_tokens},
                      {"completion_tokens", r.response.completion_tokens}};
    rj["outcome"] = outcome_json(r.outcome);
    rj["previous_unparsed"] = r.previous_unparsed;
    rs.push_back(std::move(rj));
  }
  j["rounds"] = std::move(rs);
  j["final"] = final ? outcome_json(*final) : nlohmann::ordered_json(nullptr);
  return j;
}

AnnotationRecord AnnotationRecord::from_json(const nlohmann::json& j) {
  AnnotationRecord rec;
  rec.example_id = j.at("example_id").get<std::string>();
  rec.strategy = parse_strategy(j.at("strategy").get<std::string>());
  rec.status = j.at("status").get<std::string>() == "ok" ? RecordStatus::Ok : RecordStatus::Failed;
  if (j.contains("error")) rec.error = j["error"].get<std::string>();
  rec.retrieved_ids = j.at("retrieved_ids").get<std::vector<std::string>>();
  std::string last_raw;
  for (const auto& rj : j.at("rounds")) {
    RoundEntry r;
    r.kind = parse_round_kind(rj.at("kind").get<std::string>());
    r.index = rj.at("index").get<int>();
    r.sample_index = rj.at("sample_index").get<int>();
    r.backend_id = rj.at("backend_id").get<std::string>();
    r.prompt_digest = rj.at("prompt_digest").get<std::string>();
    const auto& resp = rj.at("response");
    r.response.text = resp.at("text").get<std::string>();
    r.response.prompt_tokens = resp.value("prompt_tokens", 0);
    r.response.completion_tokens = resp.value("completion_tokens", 0);
    r.response.backend_id = r.backend_id;
    r.outcome = outcome_from_json(rj.at("outcome"), r.response.text);
    r.previous_unparsed = rj.value("previous_unparsed", false);
    last_raw = r.response.text;
    rec.rounds.push_back(std::move(r));
  }
  if (!j.at("final").is_null()) rec.final = outcome_from_json(j["final"], last_raw);
  return rec;
}

// ---------------------------------------------------------------------------

Orchestrator::Orchestrator(RunPlan plan, Gateway& gateway, PromptEngine engine)
    : plan_(std::move(plan)), gateway_(gateway), engine_(std::move(engine)) {
  plan_.validate();
  if (plan_.pool) {
    for (std::size_t i = 0; i < plan_.pool->examples.size(); ++i) pool_positions_[plan_.pool->examples[i].id] = i;
  }
}

std::vector<Example> Orchestrator::retrieve(const Example& target) const {
  if (plan_.k_examples == 0) return {};
  if (plan_.retrieval == Retrieval::Random) {
    return random_examples(*plan_.pool, plan_.k_examples, mix_seed(plan_.seed, fnv1a64(target.id)), target.id);
  }
  const auto query = embed_text(target.text, *plan_.embedder);
  const auto neighbors = top_k(*plan_.index, query, plan_.k_examples + 1);
  std::vector<Example> out;
  for (const auto& n : neighbors) {
    if (n.example_id == target.id) continue;
    if (out.size() == plan_.k_examples) break;
    out.push_back(plan_.pool->examples[pool_positions_.at(n.example_id)]);
  }
  if (out.empty()) {
    throw ValidationError(fmt::format("no similar examples available for '{}'", target.id));
  }
  return out;
}

PromptContext Orchestrator::base_context(const Example& example, std::vector<Example> examples) const {
  PromptContext ctx;
  ctx.target_text = example.text;
  ctx.label_set = plan_.eval_split->label_set;
  ctx.examples = std::move(examples);
  return ctx;
}

RoundEntry Orchestrator::call(RoundKind kind, int index, const RenderedPrompt& prompt, const BackendConfig& backend,
                              double temperature, int sample_index) const {
  ChatRequest request;
  request.messages = prompt.messages;
  request.temperature = temperature;
  request.max_tokens = backend.max_tokens;
  request.sample_index = sample_index;

  RoundEntry entry;
  entry.kind = kind;
  entry.index = index;
  entry.sample_index = sample_index;
  entry.backend_id = backend.backend_id;
  entry.prompt_digest = prompt.prompt_digest();
  entry.response = gateway_.complete(request, backend);
  entry.outcome = parse(entry.response.text, plan_.eval_split->label_set, plan_.parser);
  return entry;
}

namespace {

std::vector<std::string> ids_of(const std::vector<Example>& examples) {
  std::vector<std::string> ids;
  ids.reserve(examples.size());
  for (const auto& ex : examples) ids.push_back(ex.id);
  return ids;
}

template <typename Body>
AnnotationRecord guarded(const Example& example, Strategy strategy, Body&& body) {
  AnnotationRecord rec;
  rec.example_id = example.id;
  rec.strategy = strategy;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(rec);
  } catch (const std::exception& e) {
    rec.status = RecordStatus::Failed;
    rec.error = e.what();
    rec.final.reset();
  }
  rec.wall_time =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  return rec;
}

}  // namespace

AnnotationRecord Orchestrator::run_single(const Example& example) const {
  return guarded(example, plan_.strategy, [&](AnnotationRecord& rec) {
    auto examples = retrieve(example);
    rec.retrieved_ids = ids_of(examples);
    const auto prompt = engine_.render(plan_.strategy, base_context(example, std::move(examples)));
    rec.prompts.push_back(prompt);
    const auto& backend = plan_.backends.front();
    rec.rounds.push_back(call(RoundKind::Single, 1, prompt, backend, backend.temperature, 0));
    rec.final = rec.rounds.back().outcome;
  });
}

AnnotationRecord Orchestrator::run_rdc(const Example& example) const {
  if (plan_.strategy != Strategy::RDC) {
    throw ValidationError("run_rdc needs an RDC plan");
  }
  return guarded(example, Strategy::RDC, [&](AnnotationRecord& rec) {
    auto examples = retrieve(example);
    rec.retrieved_ids = ids_of(examples);
    std::optional<ParsedOutcome> previous;
    for (int i = 1; i <= plan_.rounds; ++i) {
      const auto& backend = plan_.backends[static_cast<std::size_t>(i - 1) % plan_.backends.size()];
      auto ctx = base_context(example, examples);
      ctx.round_index = i;
      ctx.previous = previous;  // only the immediately preceding round
      const auto prompt = engine_.render(Strategy::RDC, ctx);
      rec.prompts.push_back(prompt);
      auto entry = call(i == 1 ? RoundKind::Single : RoundKind::Collaborative, i, prompt, backend,
                        backend.temperature, 0);
      entry.previous_unparsed = previous && !previous->ok();
      previous = entry.outcome;
      rec.rounds.push_back(std::move(entry));
    }
    rec.final = previous;
  });
}

AnnotationRecord Orchestrator::run_usc(const Example& example) const {
  if (!is_usc(plan_.strategy)) {
    throw ValidationError("run_usc needs a USC plan");
  }
  return guarded(example, plan_.strategy, [&](AnnotationRecord& rec) {
    auto examples = retrieve(example);
    rec.retrieved_ids = ids_of(examples);
    const auto& backend = plan_.backends.front();
    const auto sample_prompt = engine_.render(plan_.strategy, base_context(example, examples));
    rec.prompts.push_back(sample_prompt);
    std::vector<ParsedOutcome> references;
    for (int s = 0; s < plan_.usc_samples; ++s) {
      rec.rounds.push_back(call(RoundKind::Sample, s + 1, sample_prompt, backend, plan_.usc_temperature, s));
      references.push_back(rec.rounds.back().outcome);
    }
    // The aggregation step sees the references only.
    auto ctx = base_context(example, {});
    ctx.references = std::move(references);
    const auto aggregate_prompt = engine_.render(plan_.strategy, ctx);
    rec.prompts.push_back(aggregate_prompt);
    rec.rounds.push_back(call(RoundKind::Aggregate, plan_.usc_samples + 1, aggregate_prompt, backend,
                              backend.temperature, 0));
    rec.final = rec.rounds.back().outcome;
  });
}

AnnotationRecord Orchestrator::annotate_one(const Example& example) const {
  if (trim(example.text).empty()) {
    throw ValidationError(fmt::format("example '{}' has empty text", example.id));
  }
  if (plan_.strategy == Strategy::RDC) return run_rdc(example);
  if (is_usc(plan_.strategy)) return run_usc(example);
  return run_single(example);
}

// ---------------------------------------------------------------------------

namespace {

// Ok records by example id, as their serialized line.
void read_completed(const std::filesystem::path& path, std::map<std::string, std::string>& out) {
  if (!std::filesystem::exists(path)) return;
  for (const auto& line : split_lines(read_file(path))) {
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.at("status").get<std::string>() == "ok") out[j.at("example_id").get<std::string>()] = line;
    } catch (const nlohmann::json::exception&) {
      // Interrupted append.
    }
  }
}

void read_transcripts(const std::filesystem::path& path, std::map<std::string, std::string>& out) {
  if (!std::filesystem::exists(path)) return;
  for (const auto& line : split_lines(read_file(path))) {
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out[j.at("digest").get<std::string>()] = line;
    } catch (const nlohmann::json::exception&) {
    }
  }
}

std::ofstream open_append(const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) {
    const auto text = read_file(path);
    if (!text.empty() && text.back() != '\n') {
      std::ofstream fix(path, std::ios::app);
      fix << '\n';
    }
  }
  std::ofstream out(path, std::ios::app);
  if (!out) throw RuntimeError(fmt::format("cannot open {} for writing", path.string()));
  return out;
}

std::string transcript_line(const RenderedPrompt& prompt) {
  nlohmann::ordered_json j;
  j["digest"] = prompt.prompt_digest();
  nlohmann::ordered_json messages = nlohmann::ordered_json::array();
  for (const auto& m : prompt.messages) {
    nlohmann::ordered_json mj;
    mj["role"] = to_string(m.role);
    mj["content"] = m.content;
    messages.push_back(std::move(mj));
  }
  j["messages"] = std::move(messages);
  return j.dump();
}

void write_manifest(const RunOutputs& out, const RunPlan& plan, const std::string& started,
                    const std::optional<std::string>& finished, std::size_t done, std::size_t failed) {
  nlohmann::ordered_json m;
  m["run_id"] = plan.run_id;
  m["plan"] = plan.to_json();
  m["code_version"] = kCodeVersion;
  m["started_at"] = started;
  m["finished_at"] = finished ? nlohmann::ordered_json(*finished) : nlohmann::ordered_json(nullptr);
  m["status"] = finished ? "finished" : "running";
  m["records_ok"] = done;
  m["records_failed"] = failed;
  m["artifacts"] = {{"records", out.records().filename().string()},
                    {"transcripts", out.transcripts().filename().string()},
                    {"timings", out.timings().filename().string()}};
  write_file_atomic(out.manifest(), m.dump(2) + "\n");
}

}  // namespace

std::vector<AnnotationRecord> run_dataset(const RunPlan& plan, Gateway& gateway, const std::filesystem::path& out_dir,
                                          const PromptEngine& engine) {
  const Orchestrator orchestrator(plan, gateway, engine);
  const RunOutputs out{out_dir};
  try {
    std::filesystem::create_directories(out_dir);
  } catch (const std::filesystem::filesystem_error& e) {
    throw RuntimeError(e.what());
  }

  std::string started = utc_timestamp();
  if (std::filesystem::exists(out.manifest())) {
    const auto existing = nlohmann::json::parse(read_file(out.manifest()), nullptr, false);
    if (existing.is_discarded() || !existing.contains("run_id")) {
      throw ValidationError(fmt::format("unreadable manifest in {}", out_dir.string()));
    }
    if (existing["run_id"].get<std::string>() != plan.run_id) {
      throw ValidationError(fmt::format("{} already holds run '{}' (this run is '{}')", out_dir.string(),
                                        existing["run_id"].get<std::string>(), plan.run_id));
    }
    if (existing.contains("started_at") && existing["started_at"].is_string()) {
      started = existing["started_at"].get<std::string>();
    }
  }
  write_manifest(out, plan, started, std::nullopt, 0, 0);

  std::map<std::string, std::string> completed;
  read_completed(out.records(), completed);
  read_completed(out.partial_records(), completed);
  std::map<std::string, std::string> transcripts;
  read_transcripts(out.transcripts(), transcripts);
  read_transcripts(out.partial_transcripts(), transcripts);

  std::vector<const Example*> pending;
  std::set<std::string> eval_ids;
  for (const auto& ex : plan.eval_split->examples) {
    eval_ids.insert(ex.id);
    if (!completed.contains(ex.id)) pending.push_back(&ex);
  }
  // Completed lines left by a different eval split do not belong to this run.
  std::erase_if(completed, [&](const auto& kv) { return !eval_ids.contains(kv.first); });
  std::sort(pending.begin(), pending.end(), [](const Example* a, const Example* b) { return a->id < b->id; });

  std::map<std::string, AnnotationRecord> fresh;
  if (!pending.empty()) {
    auto record_out = open_append(out.partial_records());
    auto transcript_out = open_append(out.partial_transcripts());
    auto timing_out = open_append(out.timings());
    std::mutex writer;
    std::string io_error;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < pending.size(); i = next++) {
        auto rec = orchestrator.annotate_one(*pending[i]);
        std::lock_guard lock(writer);
        for (const auto& p : rec.prompts) {
          auto digest = p.prompt_digest();
          if (!transcripts.contains(digest)) {
            auto line = transcript_line(p);
            transcript_out << line << '\n';
            transcripts.emplace(std::move(digest), std::move(line));
          }
        }
        transcript_out.flush();
        record_out << rec.to_json().dump() << '\n';
        record_out.flush();
        nlohmann::ordered_json t;
        t["run_id"] = plan.run_id;
        t["example_id"] = rec.example_id;
        t["wall_time_ms"] = rec.wall_time.count();
        nlohmann::ordered_json lat = nlohmann::ordered_json::array();
        for (const auto& r : rec.rounds) lat.push_back({{"latency_ms", r.response.latency.count()}, {"from_cache", r.response.from_cache}});
        t["rounds"] = std::move(lat);
        timing_out << t.dump() << '\n';
        timing_out.flush();
        if ((!record_out || !transcript_out || !timing_out) && io_error.empty()) {
          io_error = fmt::format("write failed in {}", out_dir.string());
        }
        fresh.emplace(rec.example_id, std::move(rec));
      }
    };
    {
      const std::size_t threads = std::min(gateway.max_in_flight(), pending.size());
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (!io_error.empty()) throw RuntimeError(io_error);
  }

  std::vector<AnnotationRecord> records;
  std::string records_text;
  std::size_t failed = 0;
  for (const auto& id : eval_ids) {
    if (auto it = completed.find(id); it != completed.end()) {
      records.push_back(AnnotationRecord::from_json(nlohmann::json::parse(it->second)));
      records_text += it->second;
    } else {
      auto& rec = fresh.at(id);
      records_text += rec.to_json().dump();
      records.push_back(std::move(rec));
    }
    records_text += '\n';
    if (records.back().status == RecordStatus::Failed) ++failed;
  }
  std::string transcripts_text;
  for (const auto& [digest, line] : transcripts) transcripts_text += line + '\n';

  write_file_atomic(out.records(), records_text);
  write_file_atomic(out.transcripts(), transcripts_text);
  std::filesystem::remove(out.partial_records());
  std::filesystem::remove(out.partial_transcripts());
  write_manifest(out, plan, started, utc_timestamp(), records.size() - failed, failed);
  return records;
}

std::vector<AnnotationRecord> load_records(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ValidationError(fmt::format("records file not found: {}", path.string()));
  }
  std::vector<AnnotationRecord> out;
  std::size_t line_no = 0;
  for (const auto& line : split_lines(read_file(path))) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(AnnotationRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(fmt::format("{}: line {}: malformed record: {}", path.string(), line_no, e.what()));
    }
  }
  return out;
}

}  // namespace rdc
