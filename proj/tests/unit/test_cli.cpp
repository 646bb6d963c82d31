#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "rdc/cli.hpp"
#include "rdc/evaluator.hpp"
#include "support.hpp"

using namespace rdc;
using rdc::test::TempDir;
using rdc::test::write_text;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

void write_dbpedia(const std::filesystem::path& path, std::size_t n, std::size_t offset = 0) {
  const auto labels = bundled_label_set("dbpedia");
  std::string csv;
  for (std::size_t i = 0; i < n; ++i) {
    const auto cls = (i + offset) % 14 + 1;
    csv += std::to_string(cls) + ",\"Entry " + std::to_string(i + offset) + "\",\"An article about a " +
           labels.labels()[cls - 1] + " numbered " + std::to_string(i + offset) + ".\"\n";
  }
  write_text(path, csv);
}

/// Config with a synthetic mock, DBPedia pool and eval, output under `dir`.
void write_config(const TempDir& dir, const std::string& extra_plan = "") {
  write_dbpedia(dir / "pool.csv", 40, 100);
  write_dbpedia(dir / "eval.csv", 12);
  write_text(dir / "config.json", R"({
    "backends": [
      {"id": "syn", "kind": "mock", "model": "synthetic", "seed": 3, "synthetic": {"p_bare": 0.6, "p_primed": 0.8}},
      {"id": "echo", "kind": "mock", "model": "echo", "rules": [{"contains": "numbered 3.", "reply": "Athlete\nA sportsperson."},
                                                              {"reply": "Company\nA firm."}]}
    ],
    "embedding_provider": {"kind": "hashed", "dim": 128},
    "datasets": {"pool": {"path": "pool.csv", "adapter": "dbpedia"},
                 "eval": {"path": "eval.csv", "adapter": "dbpedia"},
                 "index": "index.jsonl"},
    "plan": {"strategy": "RDC", "seed": 11)" + extra_plan + R"(},
    "limits": {"max_in_flight": 4},
    "output_dir": "out"
  })");
}

}  // namespace

TEST_CASE("cli: usage errors") {
  CHECK(run_cli({}).code == cli::kValidation);
  CHECK(run_cli({"frobnicate"}).code == cli::kValidation);
  CHECK(run_cli({"annotate"}).code == cli::kValidation);
  CHECK(run_cli({"--help"}).code == cli::kOk);
}

TEST_CASE("cli ingest") {
  TempDir dir;
  write_dbpedia(dir / "dbpedia.csv", 30);
  const auto first = run_cli({"ingest", "--dataset", (dir / "dbpedia.csv").string(), "--adapter", "dbpedia", "--out",
                              (dir / "out.jsonl").string()});
  CHECK(first.code == 0);
  CHECK(first.out.find("30 rows") != std::string::npos);
  CHECK(first.out.find("14 labels") != std::string::npos);
  const auto bytes = read_file(dir / "out.jsonl");
  CHECK(rdc::test::content_lines(bytes).size() == 30);

  SUBCASE("re-run is byte-identical") {
    CHECK(run_cli({"ingest", "--dataset", (dir / "dbpedia.csv").string(), "--adapter", "dbpedia", "--out",
                   (dir / "out.jsonl").string()})
              .code == 0);
    CHECK(read_file(dir / "out.jsonl") == bytes);
  }
  SUBCASE("the output reads back as generic JSONL") {
    const auto r = run_cli({"ingest", "--dataset", (dir / "out.jsonl").string(), "--adapter", "jsonl", "--labels",
                            "dbpedia", "--out", (dir / "again.jsonl").string()});
    CHECK(r.code == 0);
    CHECK(read_file(dir / "again.jsonl") == bytes);
  }
  SUBCASE("missing file names the path") {
    const auto r = run_cli({"ingest", "--dataset", (dir / "missing.csv").string(), "--adapter", "dbpedia", "--out",
                            (dir / "x.jsonl").string()});
    CHECK(r.code != 0);
    CHECK(r.err.find("missing.csv") != std::string::npos);
  }
  SUBCASE("bad row reports its number") {
    write_text(dir / "bad.csv", "1,a,b\n99,c,d\n");
    const auto r = run_cli({"ingest", "--dataset", (dir / "bad.csv").string(), "--adapter", "dbpedia", "--out",
                            (dir / "x.jsonl").string()});
    CHECK(r.code == cli::kValidation);
    CHECK(r.err.find("2") != std::string::npos);
  }
}

TEST_CASE("cli annotate") {
  TempDir dir;
  write_config(dir);
  const auto config = (dir / "config.json").string();

  SUBCASE("defaults: RDC, 3 rounds, 5 examples; summary, records, manifest, evaluation") {
    const auto r = run_cli({"annotate", "--config", config, "--strategy", "rdc", "--rounds", "3"});
    CHECK(r.code == 0);
    CHECK(r.out.find("12 records") != std::string::npos);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1);
    const auto manifest = nlohmann::json::parse(read_file(dir / "out" / "manifest.json"));
    CHECK(manifest.at("plan").at("strategy") == "RDC");
    CHECK(manifest.at("plan").at("rounds") == 3);
    CHECK(manifest.at("plan").at("k_examples") == 5);
    CHECK(manifest.at("plan").at("retrieval") == "similar");
    CHECK(manifest.at("plan").at("seed") == 11);
    const auto records = load_records(dir / "out" / "records.jsonl");
    CHECK(records.size() == 12);
    for (const auto& rec : records) {
      CHECK(rec.rounds.size() == 3);
      CHECK(rec.retrieved_ids.size() == 5);
    }
    const auto eval = reports_from_csv(read_file(dir / "out" / "evaluation.csv"));
    REQUIRE(eval.size() == 1);
    CHECK(eval[0].n_items == 12);
    CHECK(eval[0].dataset_id == "dbpedia");
  }
  SUBCASE("same config twice gives identical records") {
    CHECK(run_cli({"annotate", "--config", config, "--out", (dir / "a").string()}).code == 0);
    CHECK(run_cli({"annotate", "--config", config, "--out", (dir / "b").string()}).code == 0);
    CHECK(read_file(dir / "a" / "records.jsonl") == read_file(dir / "b" / "records.jsonl"));
  }
  SUBCASE("flag overrides reach the manifest") {
    const auto r = run_cli({"annotate", "--config", config, "--strategy", "USC", "--k", "2", "--seed", "9", "--limit",
                            "4", "--backend", "echo", "--usc-samples", "2", "--retrieval", "similar", "--out",
                            (dir / "o").string()});
    CHECK(r.code == 0);
    const auto m = nlohmann::json::parse(read_file(dir / "o" / "manifest.json"));
    CHECK(m.at("plan").at("strategy") == "USC");
    CHECK(m.at("plan").at("k_examples") == 2);
    CHECK(m.at("plan").at("seed") == 9);
    CHECK(m.at("plan").at("usc_samples") == 2);
    CHECK(m.at("plan").at("retrieval") == "similar");
    CHECK(m.at("plan").at("backends")[0].at("backend_id") == "echo");
    CHECK(m.at("plan").at("eval").at("size") == 4);
    CHECK(load_records(dir / "o" / "records.jsonl").size() == 4);
  }
  SUBCASE("validation errors exit 1 before any work") {
    const auto zero = run_cli({"annotate", "--config", config, "--limit", "0"});
    CHECK(zero.code == cli::kValidation);
    CHECK_FALSE(std::filesystem::exists(dir / "out" / "manifest.json"));
    CHECK(run_cli({"annotate", "--config", config, "--strategy", "bagging"}).code == cli::kValidation);
    CHECK(run_cli({"annotate", "--config", config, "--backend", "nope"}).code == cli::kValidation);
    CHECK(run_cli({"annotate", "--config", config, "--rounds", "0"}).code == cli::kValidation);
    CHECK(run_cli({"annotate", "--config", (dir / "absent.json").string()}).code != 0);
  }
  SUBCASE("index command then annotate reuses the saved index") {
    const auto idx = run_cli({"index", "--config", config});
    CHECK(idx.code == 0);
    CHECK(std::filesystem::exists(dir / "index.jsonl"));
    CHECK(run_cli({"annotate", "--config", config, "--strategy", "FS-simi"}).code == 0);
  }
}

TEST_CASE("cli evaluate, compare, sweep-rounds") {
  TempDir dir;
  write_config(dir);
  const auto config = (dir / "config.json").string();

  SUBCASE("evaluate") {
    REQUIRE(run_cli({"annotate", "--config", config, "--strategy", "FS", "--backend", "echo"}).code == 0);
    const auto r = run_cli({"evaluate", "--config", config, "--run", (dir / "out").string(), "--model", "echo",
                            "--out", (dir / "eval.csv").string()});
    CHECK(r.code == 0);
    const auto reports = reports_from_csv(read_file(dir / "eval.csv"));
    REQUIRE(reports.size() == 1);
    // Eval rows 0 and 3 are Company and Athlete; echo answers Athlete for row 3 and Company otherwise.
    CHECK(reports[0].n_correct == 2);
    write_text(dir / "empty.jsonl", "");
    CHECK(run_cli({"evaluate", "--config", config, "--records", (dir / "empty.jsonl").string()}).code != 0);
    CHECK(run_cli({"evaluate", "--config", config, "--records", (dir / "missing.jsonl").string()}).code != 0);
  }
  SUBCASE("compare over the published SST2 values") {
    const auto r = run_cli({"compare", "--reports", rdc::test::fixture("sst2_reports.csv").string(), "--out",
                            (dir / "grid.md").string()});
    CHECK(r.code == 0);
    const auto grid = read_file(dir / "grid.md");
    CHECK(grid == r.out);
    const auto avg = grid.substr(grid.find("**Average**"));
    CHECK(avg.substr(0, avg.find('\n')).ends_with("**86.8** |"));
  }
  SUBCASE("sweep-rounds writes a three-point CSV") {
    const auto r = run_cli({"sweep-rounds", "--config", config, "--rounds-list", "1,2,3", "--out",
                            (dir / "sweep").string()});
    CHECK(r.code == 0);
    const auto lines = rdc::test::content_lines(read_file(dir / "sweep" / "sweep.csv"));
    CHECK(lines.size() == 4);
    CHECK(run_cli({"sweep-rounds", "--config", config, "--rounds-list", "3,1"}).code == cli::kValidation);
    CHECK(run_cli({"sweep-rounds", "--config", config, "--rounds-list", "1,x"}).code == cli::kValidation);
  }
}
