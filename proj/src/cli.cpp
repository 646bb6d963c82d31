#include "rdc/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include "rdc/config.hpp"
#include "rdc/error.hpp"
#include "rdc/evaluator.hpp"
#include "rdc/orchestrator.hpp"
#include "rdc/util.hpp"

namespace rdc::cli {

namespace {

struct RunOverrides {
  std::string config;
  std::string strategy;
  std::optional<int> rounds;
  std::optional<std::size_t> k;
  std::optional<std::uint64_t> seed;
  std::optional<long long> limit;
  std::vector<std::string> backends;
  std::string out;
  std::optional<int> usc_samples;
  std::string retrieval;
  bool lenient = false;
  std::optional<std::size_t> max_in_flight;
};

void add_run_options(CLI::App* cmd, RunOverrides& o) {
  cmd->add_option("--config", o.config, "JSON config file")->required();
  cmd->add_option("--strategy", o.strategy, "ZS, FS, CoT, USC, FS-simi, CoT-simi, USC-simi or RDC");
  cmd->add_option("--rounds", o.rounds, "RDC rounds");
  cmd->add_option("--k", o.k, "in-context examples per prompt");
  cmd->add_option("--seed", o.seed, "sampling seed");
  cmd->add_option("--limit", o.limit, "annotate only the first N eval examples");
  cmd->add_option("--backend", o.backends, "backend id(s); RDC cycles through them per round")->delimiter(',');
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--usc-samples", o.usc_samples, "independent USC samples");
  cmd->add_option("--retrieval", o.retrieval, "random or similar");
  cmd->add_flag("--lenient", o.lenient, "enable the substring fallback in the output parser");
  cmd->add_option("--max-in-flight", o.max_in_flight, "concurrent backend calls");
}

struct PreparedRun {
  AppConfig config;
  RunPlan plan;
  std::filesystem::path out_dir;
  std::string model_name;
};

PreparedRun prepare(const RunOverrides& o) {
  PreparedRun run;
  auto& cfg = run.config;
  cfg = AppConfig::load(o.config);

  // Flag overrides are validated before anything touches the network.
  auto& ps = cfg.plan;
  if (!o.strategy.empty()) ps.strategy = parse_strategy(o.strategy);
  if (o.rounds) ps.rounds = *o.rounds;
  if (o.k) ps.k = *o.k;
  if (o.seed) ps.seed = *o.seed;
  if (o.limit) {
    if (*o.limit < 1) throw ValidationError("--limit must be at least 1");
    ps.limit = static_cast<std::size_t>(*o.limit);
  }
  if (!o.backends.empty()) ps.backend_ids = o.backends;
  if (o.usc_samples) ps.usc_samples = *o.usc_samples;
  if (!o.retrieval.empty()) ps.retrieval = parse_retrieval(o.retrieval);
  if (o.lenient) ps.lenient_parser = true;
  if (o.max_in_flight) cfg.max_in_flight = *o.max_in_flight;
  if (cfg.max_in_flight == 0) throw ValidationError("--max-in-flight must be at least 1");
  if (ps.limit && *ps.limit == 0) throw ValidationError("limit must be at least 1");
  run.out_dir = o.out.empty() ? cfg.output_dir : std::filesystem::path(o.out);

  if (!cfg.eval) throw ValidationError("config: datasets.eval is required");
  auto eval = std::make_shared<DatasetSplit>(cfg.eval->load(SplitName::Eval));
  if (ps.limit && *ps.limit < eval->examples.size()) eval->examples.resize(*ps.limit);

  RunPlan plan = RunPlan::defaults_for(ps.strategy);
  if (ps.k) plan.k_examples = *ps.k;
  if (ps.retrieval) plan.retrieval = *ps.retrieval;
  plan.rounds = ps.rounds;
  plan.usc_samples = ps.usc_samples;
  plan.seed = ps.seed;
  plan.usc_temperature = ps.temperature_usc;
  plan.parser.lenient = ps.lenient_parser;
  plan.eval_split = eval;

  if (cfg.backends.empty()) throw ValidationError("config: no backends defined");
  std::vector<std::string> ids = ps.backend_ids;
  if (ids.empty()) ids.push_back(cfg.backends.front().config.backend_id);
  for (const auto& id : ids) {
    const auto it = std::find_if(cfg.backends.begin(), cfg.backends.end(),
                                 [&](const BackendSpec& b) { return b.config.backend_id == id; });
    if (it == cfg.backends.end()) throw ValidationError(fmt::format("unknown backend '{}'", id));
    auto backend = resolve_backend(*it, eval.get());
    if (ps.temperature_single) backend.temperature = *ps.temperature_single;
    plan.backends.push_back(std::move(backend));
  }
  for (const auto& b : plan.backends) {
    run.model_name += (run.model_name.empty() ? "" : "+") + b.model_name;
  }

  if (plan.strategy != Strategy::ZS) {
    if (!cfg.pool) throw ValidationError("config: datasets.pool is required for few-shot strategies");
    plan.pool = std::make_shared<DatasetSplit>(cfg.pool->load(SplitName::Pool));
  }
  // Structural checks that do not need the index.
  {
    RunPlan probe = plan;
    probe.retrieval = Retrieval::Random;
    probe.validate();
  }
  if (plan.strategy != Strategy::ZS && plan.retrieval == Retrieval::Similar) {
    auto embedder = std::shared_ptr<const EmbeddingProvider>(make_embedding_provider(cfg.embedding));
    plan.embedder = embedder;
    if (cfg.index_path && std::filesystem::exists(*cfg.index_path)) {
      plan.index = std::make_shared<SimilarityIndex>(SimilarityIndex::load(*cfg.index_path));
    } else {
      plan.index = std::make_shared<SimilarityIndex>(SimilarityIndex::build(*plan.pool, *embedder));
    }
  }
  if (cfg.run_id) {
    plan.run_id = *cfg.run_id;
  } else {
    plan.run_id = "run-" + sha256_hex(plan.to_json().dump()).substr(0, 12);
  }
  plan.validate();
  run.plan = std::move(plan);
  return run;
}

std::shared_ptr<ResponseCache> open_cache(const PreparedRun& run) {
  const auto path = run.config.cache_path ? *run.config.cache_path : run.out_dir / "cache.jsonl";
  return std::make_shared<ResponseCache>(path);
}

bool all_gold(const DatasetSplit& split) {
  return std::all_of(split.examples.begin(), split.examples.end(), [](const Example& e) { return e.gold_label.has_value(); });
}

int cmd_annotate(const RunOverrides& o, std::ostream& out) {
  auto run = prepare(o);
  Gateway gateway(open_cache(run), run.config.max_in_flight);
  const auto records = run_dataset(run.plan, gateway, run.out_dir);
  std::size_t failed = 0;
  for (const auto& r : records) failed += r.status == RecordStatus::Failed ? 1 : 0;
  std::string accuracy = "n/a";
  if (!records.empty() && all_gold(*run.plan.eval_split)) {
    const auto report = score(records, *run.plan.eval_split, run.model_name);
    write_file_atomic(run.out_dir / "evaluation.csv", reports_to_csv({report}));
    accuracy = fmt::format("{:.1f}% (parse failures {})", report.accuracy_pct, report.n_parse_failures);
  }
  out << fmt::format("run {}: {} {} records ({} ok, {} failed), {} backend calls, {} cache hits, accuracy {} -> {}\n",
                     run.plan.run_id, display_name(run.plan.strategy), records.size(), records.size() - failed, failed,
                     gateway.backend_calls(), gateway.cache_hits(), accuracy, run.out_dir.string());
  return failed > 0 ? kRuntime : kOk;
}

int cmd_sweep(RunOverrides o, const std::string& rounds_list, std::ostream& out) {
  std::vector<int> rounds;
  for (const auto& part : CLI::detail::split(rounds_list, ',')) {
    try {
      rounds.push_back(std::stoi(std::string(trim(part))));
    } catch (const std::exception&) {
      throw ValidationError(fmt::format("bad rounds value '{}'", part));
    }
  }
  if (o.strategy.empty()) o.strategy = "RDC";
  auto run = prepare(o);
  if (run.plan.strategy != Strategy::RDC) throw ValidationError("sweep-rounds needs the RDC strategy");
  Gateway gateway(open_cache(run), run.config.max_in_flight);
  const auto sweep = rounds_sweep(run.plan, rounds, gateway, run.out_dir);
  const auto csv = sweep_to_csv(sweep);
  write_file_atomic(run.out_dir / "sweep.csv", csv);
  out << csv;
  return kOk;
}

int cmd_ingest(const std::string& dataset, const std::string& adapter_name, const std::string& labels_arg,
               const std::string& split_name, const std::string& out_path, std::ostream& out) {
  const auto adapter = parse_adapter(adapter_name);
  std::optional<LabelSet> labels;
  if (!labels_arg.empty()) {
    if (labels_arg.find(',') != std::string::npos) {
      std::vector<std::string> names;
      for (const auto& n : CLI::detail::split(labels_arg, ',')) names.emplace_back(trim(n));
      labels = LabelSet("custom", names);
    } else {
      labels = bundled_label_set(labels_arg);
    }
  }
  if (adapter == Adapter::Jsonl && !labels) throw ValidationError("--labels is required for jsonl input");
  const auto split = load_dataset(dataset, adapter, parse_split_name(split_name), labels ? &*labels : nullptr);
  write_file_atomic(out_path, to_jsonl(split));
  std::size_t labeled = 0;
  for (const auto& e : split.examples) labeled += e.gold_label ? 1 : 0;
  out << fmt::format("ingested {} rows ({} labeled) from {}; dataset {} with {} labels: {} -> {}\n", split.size(),
                     labeled, dataset, split.dataset_id, split.label_set.size(), join(split.label_set.labels(), ", "),
                     out_path);
  return kOk;
}

int cmd_index(const std::string& config_path, const std::string& out_path, std::ostream& out) {
  const auto cfg = AppConfig::load(config_path);
  if (!cfg.pool) throw ValidationError("config: datasets.pool is required");
  const auto pool = cfg.pool->load(SplitName::Pool);
  const auto provider = make_embedding_provider(cfg.embedding);
  const auto index = SimilarityIndex::build(pool, *provider);
  std::filesystem::path target = out_path;
  if (target.empty()) target = cfg.index_path ? *cfg.index_path : cfg.output_dir / "index.jsonl";
  index.save(target);
  out << fmt::format("indexed {} pool examples (dim {}, provider {}) -> {}\n", index.size(), index.dim(),
                     index.provider_id(), target.string());
  return kOk;
}

int cmd_evaluate(const std::string& config_path, const std::string& records_path, const std::string& run_dir,
                 const std::string& eval_path, const std::string& adapter_name, const std::string& labels_arg,
                 const std::string& model, const std::string& out_path, std::ostream& out) {
  std::filesystem::path records_file = records_path;
  if (records_file.empty()) {
    if (run_dir.empty()) throw ValidationError("give --records or --run");
    records_file = std::filesystem::path(run_dir) / "records.jsonl";
  }
  DatasetSplit eval;
  if (!eval_path.empty()) {
    DatasetSource src{eval_path, parse_adapter(adapter_name.empty() ? "jsonl" : adapter_name), std::nullopt};
    if (!labels_arg.empty()) src.labels = bundled_label_set(labels_arg);
    eval = src.load(SplitName::Eval);
  } else if (!config_path.empty()) {
    const auto cfg = AppConfig::load(config_path);
    if (!cfg.eval) throw ValidationError("config: datasets.eval is required");
    eval = cfg.eval->load(SplitName::Eval);
  } else {
    throw ValidationError("give --config or --eval");
  }
  const auto records = load_records(records_file);
  const auto report = score(records, eval, model);
  const auto csv = reports_to_csv({report});
  if (!out_path.empty()) write_file_atomic(out_path, csv);
  out << csv;
  return kOk;
}

int cmd_compare(const std::vector<std::string>& inputs, const std::string& out_path, const std::string& csv_path,
                std::ostream& out) {
  std::vector<AccuracyReport> reports;
  for (const auto& path : inputs) {
    auto part = reports_from_csv(read_file(path));
    reports.insert(reports.end(), part.begin(), part.end());
  }
  if (reports.empty()) throw ValidationError("no reports to compare");
  const auto grid = render_table(comparison_table(reports));
  if (!out_path.empty()) write_file_atomic(out_path, grid);
  if (!csv_path.empty()) write_file_atomic(csv_path, reports_to_csv(reports));
  out << grid;
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-round collaborative text annotation with LLM backends", "rdc-annotate"};
  app.require_subcommand(1);

  std::string dataset, adapter, labels, split = "eval", ingest_out;
  auto* ingest = app.add_subcommand("ingest", "validate a dataset and write generic JSONL");
  ingest->add_option("--dataset", dataset, "input file")->required();
  ingest->add_option("--adapter", adapter, "jsonl, sst2, sst5, agnews or dbpedia")->required();
  ingest->add_option("--labels", labels, "bundled label set name or comma-separated labels");
  ingest->add_option("--split", split, "pool or eval");
  ingest->add_option("--out", ingest_out, "output JSONL")->required();

  std::string index_config, index_out;
  auto* index = app.add_subcommand("index", "embed the pool and write a similarity index");
  index->add_option("--config", index_config, "JSON config file")->required();
  index->add_option("--out", index_out, "index file");

  RunOverrides annotate_opts;
  auto* annotate = app.add_subcommand("annotate", "annotate the eval split");
  add_run_options(annotate, annotate_opts);

  RunOverrides sweep_opts;
  std::string rounds_list = "1,2,3";
  auto* sweep = app.add_subcommand("sweep-rounds", "accuracy of RDC as a function of rounds");
  add_run_options(sweep, sweep_opts);
  sweep->add_option("--rounds-list", rounds_list, "comma-separated, strictly increasing");

  std::string eval_config, records, run_dir, eval_path, eval_adapter, eval_labels, model, eval_out;
  auto* evaluate = app.add_subcommand("evaluate", "score records against gold labels");
  evaluate->add_option("--config", eval_config, "JSON config file (for datasets.eval)");
  evaluate->add_option("--records", records, "records.jsonl");
  evaluate->add_option("--run", run_dir, "run directory");
  evaluate->add_option("--eval", eval_path, "eval dataset file (instead of --config)");
  evaluate->add_option("--adapter", eval_adapter, "adapter for --eval");
  evaluate->add_option("--labels", eval_labels, "bundled label set for a jsonl --eval");
  evaluate->add_option("--model", model, "model name for the report");
  evaluate->add_option("--out", eval_out, "CSV output");

  std::vector<std::string> report_files;
  std::string compare_out, compare_csv;
  auto* compare = app.add_subcommand("compare", "build the strategy comparison grid from report CSVs");
  compare->add_option("--reports", report_files, "report CSV files")->required();
  compare->add_option("--out", compare_out, "markdown output");
  compare->add_option("--csv", compare_csv, "combined CSV output");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }

  try {
    if (*ingest) return cmd_ingest(dataset, adapter, labels, split, ingest_out, out);
    if (*index) return cmd_index(index_config, index_out, out);
    if (*annotate) return cmd_annotate(annotate_opts, out);
    if (*sweep) return cmd_sweep(sweep_opts, rounds_list, out);
    if (*evaluate) {
      return cmd_evaluate(eval_config, records, run_dir, eval_path, eval_adapter, eval_labels, model, eval_out, out);
    }
    if (*compare) return cmd_compare(report_files, compare_out, compare_csv, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kValidation;
}

}  // namespace rdc::cli
