#include <doctest.h>

#include <numeric>
#include <random>
#include <sstream>

#include "rdc/error.hpp"
#include "rdc/evaluator.hpp"
#include "rdc/synthetic.hpp"
#include "support.hpp"

using namespace rdc;

namespace {

AnnotationRecord record_for(const std::string& id, std::optional<std::string> label) {
  AnnotationRecord r;
  r.example_id = id;
  r.strategy = Strategy::FS;
  ParsedOutcome o;
  if (label) {
    o.label = *label;
    o.status = ParseStatus::Ok;
  } else {
    o.raw_text = "no idea";
    o.rationale = "no idea";
  }
  r.final = o;
  return r;
}

/// 20 eval examples; the first `correct` records carry the gold label, the rest
/// carry the other label (or fail to parse when `unparsed` is set).
std::pair<DatasetSplit, std::vector<AnnotationRecord>> fixture_records(std::size_t correct, bool unparsed = false) {
  const LabelSet labels("sst2", {"positive", "negative"});
  auto split = rdc::test::synthetic_split(labels, 20);
  std::vector<AnnotationRecord> records;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& e = split.examples[i];
    if (i < correct) {
      records.push_back(record_for(e.id, e.gold_label));
    } else if (unparsed) {
      records.push_back(record_for(e.id, std::nullopt));
    } else {
      records.push_back(record_for(e.id, *e.gold_label == "positive" ? "negative" : "positive"));
    }
  }
  return {split, records};
}

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

}  // namespace

TEST_CASE("score arithmetic") {
  SUBCASE("17 of 20 correct") {
    const auto [split, records] = fixture_records(17);
    const auto r = score(records, split, "m");
    CHECK(r.n_items == 20);
    CHECK(r.n_correct == 17);
    CHECK(r.n_parse_failures == 0);
    CHECK(r.accuracy_pct == 85.0);
    CHECK(r.dataset_id == "sst2");
    CHECK(r.strategy == Strategy::FS);
  }
  SUBCASE("parse failures are incorrect and tallied") {
    const auto [split, records] = fixture_records(12, true);
    const auto r = score(records, split);
    CHECK(r.n_correct == 12);
    CHECK(r.n_parse_failures == 8);
    CHECK(r.accuracy_pct == 60.0);
  }
  SUBCASE("all parse failures") {
    const auto [split, records] = fixture_records(0, true);
    const auto r = score(records, split);
    CHECK(r.accuracy_pct == 0.0);
    CHECK(r.n_parse_failures == r.n_items);
  }
  SUBCASE("failed records count as errors and incorrect") {
    auto [split, records] = fixture_records(20);
    records[0].status = RecordStatus::Failed;
    records[0].final.reset();
    const auto r = score(records, split);
    CHECK(r.n_correct == 19);
    CHECK(r.n_errors == 1);
  }
  SUBCASE("order independence") {
    auto [split, records] = fixture_records(13, true);
    const auto base = score(records, split);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 20; ++i) {
      std::shuffle(records.begin(), records.end(), rng);
      const auto r = score(records, split);
      CHECK(r.n_correct == base.n_correct);
      CHECK(r.n_parse_failures == base.n_parse_failures);
      CHECK(r.accuracy_pct == base.accuracy_pct);
    }
  }
  SUBCASE("errors") {
    auto [split, records] = fixture_records(10);
    CHECK_THROWS_AS(score({}, split), ValidationError);
    auto unknown = records;
    unknown[0].example_id = "nope";
    CHECK_THROWS_AS(score(unknown, split), ValidationError);
    auto no_gold = split;
    no_gold.examples[0].gold_label.reset();
    CHECK_THROWS_AS(score(records, no_gold), ValidationError);
    auto mixed = records;
    mixed[1].strategy = Strategy::RDC;
    CHECK_THROWS_AS(score(mixed, split), ValidationError);
  }
}

TEST_CASE("reports CSV round trip") {
  const auto [split, records] = fixture_records(17);
  auto r = score(records, split, "model, with comma");
  const auto csv = reports_to_csv({r});
  CHECK(csv.starts_with("dataset,model,strategy,n,correct,parse_failures,accuracy\n"));
  const auto back = reports_from_csv(csv);
  REQUIRE(back.size() == 1);
  CHECK(back[0].model_name == r.model_name);
  CHECK(back[0].accuracy_pct == r.accuracy_pct);
  CHECK(back[0].n_correct == 17);
  CHECK_THROWS_AS(reports_from_csv("dataset,model\nsst2,m\n"), ValidationError);
}

TEST_CASE("comparison table") {
  const auto reports = reports_from_csv(read_file(rdc::test::fixture("sst2_reports.csv")));
  REQUIRE(reports.size() == 40);
  const auto table = comparison_table(reports);
  REQUIRE(table.rows.size() == 6);
  CHECK(table.rows[0].model_name == "Qwen-72B");
  CHECK(table.rows[0].cells[0] == std::optional<double>(85.9));
  CHECK(table.rows[0].cells[7] == std::optional<double>(88.2));
  CHECK(table.rows[5].average);

  SUBCASE("cells equal the inputs, averages equal an independent mean") {
    for (const auto& rep : reports) {
      const auto row = std::find_if(table.rows.begin(), table.rows.end(),
                                    [&](const ComparisonRow& r) { return r.model_name == rep.model_name; });
      const auto col = std::find(kAllStrategies.begin(), kAllStrategies.end(), rep.strategy) - kAllStrategies.begin();
      CHECK(row->cells[col] == std::optional<double>(rep.accuracy_pct));
    }
    for (std::size_t col = 0; col < kAllStrategies.size(); ++col) {
      double sum = 0.0;
      for (std::size_t r = 0; r < 5; ++r) sum += *table.rows[r].cells[col];
      CHECK(std::abs(*table.rows[5].cells[col] - sum / 5.0) <= 1e-9);
    }
    CHECK(std::abs(*table.rows[5].cells[7] - (88.2 + 87.8 + 85.8 + 88.8 + 83.2) / 5) <= 1e-9);
  }
  SUBCASE("rendered average row under RDC reads 86.8") {
    const auto text = render_table(table);
    const auto avg_line = text.substr(text.find("**Average**"));
    CHECK(avg_line.substr(0, avg_line.find('\n')).ends_with("**86.8** |"));
  }
  SUBCASE("marks match the published marking") {
    std::istringstream in(read_file(rdc::test::fixture("sst2_reports_marks.txt")));
    std::size_t row = 0;
    for (std::string line; std::getline(in, line); ++row) {
      const auto t = tokens(line);
      REQUIRE(t.size() == 9);
      CAPTURE(line);
      const auto marks = row_marks(table.rows[row]);
      for (std::size_t col = 0; col < 8; ++col) {
        const auto expected = t[col + 1] == "B" ? CellMark::Best : t[col + 1] == "U" ? CellMark::Second : CellMark::None;
        CHECK(marks[col] == expected);
      }
    }
    CHECK(row == 6);
  }
  SUBCASE("single report") {
    AccuracyReport r{"agnews", "m", Strategy::RDC, 10, 9, 0, 0, 90.0};
    const auto one = comparison_table({r});
    REQUIRE(one.rows.size() == 2);
    CHECK(one.rows[0].cells[7] == std::optional<double>(90.0));
    CHECK(one.rows[1].average);
    CHECK(one.rows[1].cells[7] == std::optional<double>(90.0));
    CHECK_FALSE(one.rows[0].cells[0]);
    CHECK(render_table(one).find("| **90.0** |") != std::string::npos);
  }
  SUBCASE("duplicate key") {
    auto dup = reports;
    dup.push_back(reports[3]);
    CHECK_THROWS_AS(comparison_table(dup), ValidationError);
  }
}

TEST_CASE("rounds sweep with the synthetic annotator") {
  const LabelSet labels = bundled_label_set("agnews");
  auto eval = std::make_shared<DatasetSplit>(rdc::test::synthetic_split(labels, 120, SplitName::Eval, "e"));
  auto pool = std::make_shared<DatasetSplit>(rdc::test::synthetic_split(labels, 30, SplitName::Pool, "p"));
  auto embedder = std::make_shared<HashedEmbeddingProvider>();
  auto index = std::make_shared<SimilarityIndex>(SimilarityIndex::build(*pool, *embedder));
  auto plan = RunPlan::defaults_for(Strategy::RDC);
  plan.run_id = "sweep";
  plan.eval_split = eval;
  plan.pool = pool;
  plan.index = index;
  plan.embedder = embedder;
  plan.backends = {mock_script({synthetic_annotator_rule(*eval, {0.6, 0.8})}, 7, "syn", "synthetic")};

  rdc::test::TempDir dir;
  Gateway gateway(std::make_shared<ResponseCache>());
  const auto sweep = rounds_sweep(plan, {1, 2, 3}, gateway, dir.path());
  REQUIRE(sweep.points.size() == 3);
  CHECK(sweep.points[0].rounds == 1);
  CHECK(sweep.points[2].rounds == 3);
  CHECK(std::filesystem::exists(dir / "rounds-2" / "records.jsonl"));
  CHECK(sweep_to_csv(sweep).starts_with("rounds,"));
  CHECK(rdc::test::content_lines(sweep_to_csv(sweep)).size() == 4);

  SUBCASE("rounds = 1 equals the FS-simi score on the same mock") {
    auto fs = plan;
    fs.strategy = Strategy::FsSimi;
    fs.run_id = "fs-simi";
    rdc::test::TempDir fs_dir;
    const auto records = run_dataset(fs, gateway, fs_dir.path());
    CHECK(score(records, *eval).accuracy_pct == sweep.points[0].accuracy_pct);
  }
  SUBCASE("argument checks") {
    CHECK_THROWS_AS(rounds_sweep(plan, {2, 2}, gateway, dir.path()), ValidationError);
    CHECK_THROWS_AS(rounds_sweep(plan, {0}, gateway, dir.path()), ValidationError);
    CHECK_THROWS_AS(rounds_sweep(plan, {}, gateway, dir.path()), ValidationError);
    auto fs = plan;
    fs.strategy = Strategy::FS;
    CHECK_THROWS_AS(rounds_sweep(fs, {1}, gateway, dir.path()), ValidationError);
  }
}

TEST_CASE("synthetic annotator") {
  const auto labels = bundled_label_set("sst5");
  const auto eval = rdc::test::synthetic_split(labels, 5);
  const auto backend = mock_script({synthetic_annotator_rule(eval, {1.0, 1.0})}, 1);
  Gateway gateway;
  ChatRequest r;
  r.messages = {{Role::User, "######\nThe sentence that I want you to predict is\n" + eval.examples[2].text + "\n######"}};
  const auto reply = gateway.complete(r, backend).text;
  CHECK(reply.starts_with(*eval.examples[2].gold_label + "\n"));
  CHECK(extract_target(r.messages[0].content) == std::optional<std::string>(eval.examples[2].text));
  CHECK(extract_prior_label("x\nHere are the judgments made by others regarding this sentence.\nCategory: neutral\nReason: r") ==
        std::optional<std::string>("neutral"));
  CHECK_FALSE(extract_prior_label("nothing"));
}
