#include "rdc/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

#include "rdc/error.hpp"
#include "rdc/util.hpp"

namespace rdc {

void AccuracyReport::validate() const {
  if (n_items == 0) throw ValidationError("accuracy report over zero items");
  if (n_correct > n_items) throw ValidationError("accuracy report: more correct than items");
  if (n_parse_failures + n_errors > n_items - n_correct) {
    throw ValidationError("accuracy report: failures exceed incorrect items");
  }
  const double expected = 100.0 * static_cast<double>(n_correct) / static_cast<double>(n_items);
  if (!(accuracy_pct >= 0.0 && accuracy_pct <= 100.0) || std::abs(expected - accuracy_pct) > 1e-9) {
    throw ValidationError(fmt::format("accuracy report: accuracy {} does not match {}/{}", accuracy_pct, n_correct,
                                      n_items));
  }
}

AccuracyReport score(const std::vector<AnnotationRecord>& records, const DatasetSplit& eval_split,
                     std::string model_name) {
  if (records.empty()) throw ValidationError("no records to score");
  AccuracyReport report;
  report.dataset_id = eval_split.dataset_id;
  report.model_name = std::move(model_name);
  report.strategy = records.front().strategy;
  std::set<std::string> seen;
  for (const auto& rec : records) {
    if (rec.strategy != report.strategy) {
      throw ValidationError("records mix strategies; score them separately");
    }
    if (!seen.insert(rec.example_id).second) {
      throw ValidationError(fmt::format("duplicate record for example '{}'", rec.example_id));
    }
    const Example* ex = eval_split.find(rec.example_id);
    if (ex == nullptr) throw ValidationError(fmt::format("record for unknown example '{}'", rec.example_id));
    if (!ex->gold_label) throw ValidationError(fmt::format("example '{}' has no gold label", rec.example_id));
    ++report.n_items;
    if (rec.status == RecordStatus::Failed || !rec.final) {
      ++report.n_errors;
    } else if (!rec.final->ok()) {
      ++report.n_parse_failures;
    } else if (*rec.final->label == *ex->gold_label) {
      ++report.n_correct;
    }
  }
  report.accuracy_pct = 100.0 * static_cast<double>(report.n_correct) / static_cast<double>(report.n_items);
  return report;
}

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

}  // namespace

std::string reports_to_csv(const std::vector<AccuracyReport>& reports) {
  std::string out = "dataset,model,strategy,n,correct,parse_failures,accuracy\n";
  for (const auto& r : reports) {
    out += fmt::format("{},{},{},{},{},{},{}\n", csv_field(r.dataset_id), csv_field(r.model_name),
                       display_name(r.strategy), r.n_items, r.n_correct, r.n_parse_failures, r.accuracy_pct);
  }
  return out;
}

std::vector<AccuracyReport> reports_from_csv(std::string_view text) {
  std::vector<AccuracyReport> out;
  std::size_t line_no = 0;
  for (const auto& line : split_lines(text)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (line_no == 1 && !f.empty() && f[0] == "dataset") continue;
    if (f.size() != 7) {
      throw ValidationError(fmt::format("reports CSV line {}: expected 7 fields, got {}", line_no, f.size()));
    }
    try {
      AccuracyReport r;
      r.dataset_id = f[0];
      r.model_name = f[1];
      r.strategy = parse_strategy(f[2]);
      r.n_items = std::stoul(f[3]);
      r.n_correct = std::stoul(f[4]);
      r.n_parse_failures = std::stoul(f[5]);
      r.accuracy_pct = std::stod(f[6]);
      out.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw ValidationError(fmt::format("reports CSV line {}: {}", line_no, e.what()));
    }
  }
  return out;
}

ComparisonTable comparison_table(const std::vector<AccuracyReport>& reports) {
  std::vector<std::string> datasets;
  std::map<std::string, std::vector<std::string>> models;
  std::map<std::tuple<std::string, std::string, std::size_t>, double> cells;
  for (const auto& r : reports) {
    if (r.n_items == 0 || !(r.accuracy_pct >= 0.0 && r.accuracy_pct <= 100.0)) {
      throw ValidationError(fmt::format("invalid report for {}/{}/{}", r.dataset_id, r.model_name,
                                        display_name(r.strategy)));
    }
    const auto col = static_cast<std::size_t>(r.strategy);
    if (!cells.emplace(std::make_tuple(r.dataset_id, r.model_name, col), r.accuracy_pct).second) {
      throw ValidationError(fmt::format("duplicate report for {}/{}/{}", r.dataset_id, r.model_name,
                                        display_name(r.strategy)));
    }
    if (std::find(datasets.begin(), datasets.end(), r.dataset_id) == datasets.end()) datasets.push_back(r.dataset_id);
    auto& ms = models[r.dataset_id];
    if (std::find(ms.begin(), ms.end(), r.model_name) == ms.end()) ms.push_back(r.model_name);
  }

  ComparisonTable table;
  for (const auto& dataset : datasets) {
    std::array<double, kAllStrategies.size()> sums{};
    std::array<std::size_t, kAllStrategies.size()> counts{};
    for (const auto& model : models[dataset]) {
      ComparisonRow row{dataset, model, false, {}};
      for (std::size_t col = 0; col < kAllStrategies.size(); ++col) {
        if (auto it = cells.find({dataset, model, col}); it != cells.end()) {
          row.cells[col] = it->second;
          sums[col] += it->second;
          ++counts[col];
        }
      }
      table.rows.push_back(std::move(row));
    }
    ComparisonRow avg{dataset, "Average", true, {}};
    for (std::size_t col = 0; col < kAllStrategies.size(); ++col) {
      if (counts[col] > 0) avg.cells[col] = sums[col] / static_cast<double>(counts[col]);
    }
    table.rows.push_back(std::move(avg));
  }
  return table;
}

namespace {

// Value as displayed, in tenths.
long long tenths(double v) { return std::llround(v * 10.0); }

}  // namespace

std::array<CellMark, kAllStrategies.size()> row_marks(const ComparisonRow& row) {
  std::array<CellMark, kAllStrategies.size()> marks{};
  std::vector<long long> values;
  for (const auto& c : row.cells) {
    if (c) values.push_back(tenths(*c));
  }
  std::sort(values.begin(), values.end(), std::greater<>());
  if (values.empty()) return marks;
  const long long best = values.front();
  const auto n_best = static_cast<std::size_t>(std::count(values.begin(), values.end(), best));
  std::optional<long long> second;
  if (n_best == 1 && values.size() > 1) second = values[1];
  for (std::size_t col = 0; col < row.cells.size(); ++col) {
    if (!row.cells[col]) continue;
    const auto v = tenths(*row.cells[col]);
    if (v == best) {
      marks[col] = CellMark::Best;
    } else if (second && v == *second) {
      marks[col] = CellMark::Second;
    }
  }
  return marks;
}

std::string render_table(const ComparisonTable& table) {
  std::string out = "| Dataset | Model |";
  for (auto s : kAllStrategies) out += fmt::format(" {} |", display_name(s));
  out += "\n|---|---|";
  for (std::size_t i = 0; i < kAllStrategies.size(); ++i) out += "---|";
  out += '\n';
  std::string previous_dataset;
  for (const auto& row : table.rows) {
    const auto marks = row_marks(row);
    const std::string dataset = row.dataset_id == previous_dataset ? "" : row.dataset_id;
    previous_dataset = row.dataset_id;
    out += fmt::format("| {} | {} |", dataset, row.average ? "**Average**" : row.model_name);
    for (std::size_t col = 0; col < row.cells.size(); ++col) {
      if (!row.cells[col]) {
        out += " |";
        continue;
      }
      const auto text = fmt::format("{:.1f}", static_cast<double>(tenths(*row.cells[col])) / 10.0);
      switch (marks[col]) {
        case CellMark::Best: out += fmt::format(" **{}** |", text); break;
        case CellMark::Second: out += fmt::format(" <u>{}</u> |", text); break;
        case CellMark::None: out += fmt::format(" {} |", text); break;
      }
    }
    out += '\n';
  }
  return out;
}

RoundsSweep rounds_sweep(const RunPlan& base_plan, const std::vector<int>& rounds_list, Gateway& gateway,
                         const std::filesystem::path& out_dir, const PromptEngine& engine) {
  if (base_plan.strategy != Strategy::RDC) throw ValidationError("rounds sweep needs an RDC plan");
  if (rounds_list.empty()) throw ValidationError("rounds sweep needs at least one rounds value");
  for (std::size_t i = 0; i < rounds_list.size(); ++i) {
    if (rounds_list[i] < 1) throw ValidationError("rounds values must be >= 1");
    if (i > 0 && rounds_list[i] <= rounds_list[i - 1]) {
      throw ValidationError("rounds values must be strictly increasing");
    }
  }
  std::string model;
  for (const auto& b : base_plan.backends) model += (model.empty() ? "" : "+") + b.model_name;

  RoundsSweep sweep;
  for (int rounds : rounds_list) {
    RunPlan plan = base_plan;
    plan.rounds = rounds;
    plan.run_id = fmt::format("{}-rounds-{}", base_plan.run_id, rounds);
    const auto records = run_dataset(plan, gateway, out_dir / fmt::format("rounds-{}", rounds), engine);
    auto report = score(records, *plan.eval_split, model);
    sweep.points.push_back({rounds, report.accuracy_pct, std::move(report)});
  }
  return sweep;
}

std::string sweep_to_csv(const RoundsSweep& sweep) {
  std::string out = "rounds,n,correct,parse_failures,accuracy\n";
  for (const auto& p : sweep.points) {
    out += fmt::format("{},{},{},{},{}\n", p.rounds, p.report.n_items, p.report.n_correct, p.report.n_parse_failures,
                       p.accuracy_pct);
  }
  return out;
}

}  // namespace rdc
