#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rdc/corpus.hpp"
#include "rdc/gateway.hpp"
#include "rdc/orchestrator.hpp"
#include "rdc/prompt.hpp"

namespace rdc {

struct AccuracyReport {
  std::string dataset_id;
  std::string model_name;
  Strategy strategy = Strategy::ZS;
  std::size_t n_items = 0;
  std::size_t n_correct = 0;
  /// Records whose final reply did not parse. Counted as incorrect.
  std::size_t n_parse_failures = 0;
  /// Records that failed in transport. Counted as incorrect.
  std::size_t n_errors = 0;
  double accuracy_pct = 0.0;

  void validate() const;
};

/// Correct iff the final outcome parsed and equals the gold label. Order of
/// `records` does not matter.
AccuracyReport score(const std::vector<AnnotationRecord>& records, const DatasetSplit& eval_split,
                     std::string model_name = "");

/// CSV with columns dataset,model,strategy,n,correct,parse_failures,accuracy.
std::string reports_to_csv(const std::vector<AccuracyReport>& reports);
std::vector<AccuracyReport> reports_from_csv(std::string_view text);

struct ComparisonRow {
  std::string dataset_id;
  std::string model_name;  // "Average" on average rows
  bool average = false;
  std::array<std::optional<double>, kAllStrategies.size()> cells{};
};

/// One block per dataset (first-appearance order): a row per model, then the
/// dataset's average row. Cells hold the reports' accuracy unchanged; averages
/// are means over the models present in that column.
struct ComparisonTable {
  std::vector<ComparisonRow> rows;
};

ComparisonTable comparison_table(const std::vector<AccuracyReport>& reports);

enum class CellMark { None, Best, Second };

/// Competition ranking on the one-decimal values shown: every cell equal to the
/// row maximum is Best; the cells at rank 2 are Second, so a tie for best
/// leaves no Second.
std::array<CellMark, kAllStrategies.size()> row_marks(const ComparisonRow& row);

/// Markdown grid; Best cells as **x**, Second cells as <u>x</u>, blank when absent.
std::string render_table(const ComparisonTable& table);

struct RoundsSweep {
  struct Point {
    int rounds = 1;
    double accuracy_pct = 0.0;
    AccuracyReport report;
  };
  std::vector<Point> points;
};

/// Runs the RDC plan once per rounds value (output in `out_dir/rounds-<n>`)
/// and scores each run.
RoundsSweep rounds_sweep(const RunPlan& base_plan, const std::vector<int>& rounds_list, Gateway& gateway,
                         const std::filesystem::path& out_dir, const PromptEngine& engine = PromptEngine());

std::string sweep_to_csv(const RoundsSweep& sweep);

}  // namespace rdc
