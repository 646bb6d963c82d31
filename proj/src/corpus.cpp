#include "rdc/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <random>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

#include "rdc/error.hpp"
#include "rdc/util.hpp"

namespace rdc {

LabelSet::LabelSet(std::string dataset_id, std::vector<std::string> labels)
    : dataset_id_(std::move(dataset_id)), labels_(std::move(labels)) {
  if (labels_.empty()) {
    throw ValidationError("label set is empty");
  }
  std::unordered_set<std::string> seen;
  for (const auto& label : labels_) {
    if (trim(label).empty()) {
      throw ValidationError("label set contains an empty label");
    }
    if (!seen.insert(to_lower_ascii(label)).second) {
      throw ValidationError(fmt::format("label set has duplicate label (case-insensitive): {}", label));
    }
  }
}

bool LabelSet::contains(std::string_view label) const {
  return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

std::optional<std::string> LabelSet::find_case_insensitive(std::string_view candidate) const {
  const std::string folded = to_lower_ascii(candidate);
  for (const auto& label : labels_) {
    if (to_lower_ascii(label) == folded) return label;
  }
  return std::nullopt;
}

std::optional<std::string> canonical_dataset_id(std::string_view name) {
  std::string key;
  for (char c : name) {
    if (c == '-' || c == '_' || c == ' ') continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  for (const char* id : {"sst2", "sst5", "agnews", "dbpedia"}) {
    if (key == id) return std::string(id);
  }
  return std::nullopt;
}

LabelSet bundled_label_set(std::string_view dataset_id) {
  const auto id = canonical_dataset_id(dataset_id);
  if (!id) {
    throw ValidationError(fmt::format("no bundled label set for dataset '{}'", dataset_id));
  }
  if (*id == "sst2") return LabelSet("sst2", {"negative", "positive"});
  if (*id == "sst5") {
    return LabelSet("sst5", {"very negative", "negative", "neutral", "positive", "very positive"});
  }
  if (*id == "agnews") return LabelSet("agnews", {"World", "Sports", "Business", "Sci/Tech"});
  return LabelSet("dbpedia", {"Company", "EducationalInstitution", "Artist", "Athlete", "OfficeHolder",
                              "MeanOfTransportation", "Building", "NaturalPlace", "Village", "Animal", "Plant",
                              "Album", "Film", "WrittenWork"});
}

std::string_view to_string(SplitName split) { return split == SplitName::Pool ? "pool" : "eval"; }

SplitName parse_split_name(std::string_view name) {
  if (name == "pool") return SplitName::Pool;
  if (name == "eval") return SplitName::Eval;
  throw ValidationError(fmt::format("unknown split name '{}' (expected pool or eval)", name));
}

const Example* DatasetSplit::find(std::string_view id) const {
  for (const auto& example : examples) {
    if (example.id == id) return &example;
  }
  return nullptr;
}

void validate_split(const DatasetSplit& split) {
  if (split.label_set.empty()) {
    throw ValidationError("dataset split has no label set");
  }
  std::unordered_set<std::string> ids;
  for (const auto& example : split.examples) {
    if (example.id.empty()) {
      throw ValidationError("example with empty id");
    }
    if (!ids.insert(example.id).second) {
      throw ValidationError(fmt::format("duplicate example id '{}'", example.id));
    }
    if (trim(example.text).empty()) {
      throw ValidationError(fmt::format("example '{}' has empty text", example.id));
    }
    if (example.gold_label && !split.label_set.contains(*example.gold_label)) {
      throw ValidationError(fmt::format("example '{}' has unknown label '{}'", example.id, *example.gold_label));
    }
    if (split.split == SplitName::Pool && !example.gold_label) {
      throw ValidationError(fmt::format("pool example '{}' has no gold label", example.id));
    }
  }
}

std::string_view to_string(Adapter adapter) {
  switch (adapter) {
    case Adapter::Jsonl: return "jsonl";
    case Adapter::Sst2: return "sst2";
    case Adapter::Sst5: return "sst5";
    case Adapter::AgNews: return "agnews";
    case Adapter::DbPedia: return "dbpedia";
  }
  return "jsonl";
}

Adapter parse_adapter(std::string_view name) {
  if (to_lower_ascii(name) == "jsonl") return Adapter::Jsonl;
  const auto id = canonical_dataset_id(name);
  if (id == "sst2") return Adapter::Sst2;
  if (id == "sst5") return Adapter::Sst5;
  if (id == "agnews") return Adapter::AgNews;
  if (id == "dbpedia") return Adapter::DbPedia;
  throw ValidationError(fmt::format("unknown dataset adapter '{}'", name));
}

namespace {

struct Row {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

// RFC 4180 style: quoted fields may hold separators, doubled quotes and newlines.
std::vector<Row> parse_delimited(std::string_view text, char sep, const std::filesystem::path& path) {
  std::vector<Row> rows;
  Row row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;
  row.line = 1;
  auto end_field = [&] {
    row.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    const bool blank = row.fields.size() == 1 && row.fields[0].empty();
    if (!blank) rows.push_back(std::move(row));
    row = Row{};
    row.line = line;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == sep) {
      end_field();
    } else if (c == '\n') {
      ++line;
      if (!field.empty() && field.back() == '\r') field.pop_back();
      end_row();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) {
    throw ValidationError(fmt::format("{}: row {}: unterminated quoted field", path.string(), row.line));
  }
  if (!field.empty() && field.back() == '\r') field.pop_back();
  if (field_started || !row.fields.empty() || !field.empty()) end_row();
  return rows;
}

std::size_t parse_index(std::string_view raw, std::size_t lo, std::size_t hi, const std::filesystem::path& path,
                        std::size_t line) {
  raw = trim(raw);
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
  if (ec != std::errc() || ptr != raw.data() + raw.size()) {
    throw ValidationError(fmt::format("{}: row {}: malformed class index '{}'", path.string(), line, raw));
  }
  if (value < lo || value > hi) {
    throw ValidationError(
        fmt::format("{}: row {}: unknown label index {} (expected {}..{})", path.string(), line, value, lo, hi));
  }
  return value;
}

std::string row_id(const std::filesystem::path& path, std::size_t ordinal) {
  return fmt::format("{}-{}", path.stem().string(), ordinal);
}

std::vector<Example> load_sst(std::string_view text, const LabelSet& labels, const std::filesystem::path& path) {
  auto rows = parse_delimited(text, '\t', path);
  if (rows.empty()) return {};
  const auto& header = rows.front().fields;
  std::optional<std::size_t> sentence_col, label_col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto name = to_lower_ascii(trim(header[i]));
    if (name == "sentence") sentence_col = i;
    if (name == "label") label_col = i;
  }
  if (!sentence_col || !label_col) {
    throw ValidationError(fmt::format("{}: row 1: header must name 'sentence' and 'label' columns", path.string()));
  }
  std::vector<Example> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != header.size()) {
      throw ValidationError(fmt::format("{}: row {}: expected {} fields, got {}", path.string(), row.line,
                                        header.size(), row.fields.size()));
    }
    const auto index = parse_index(row.fields[*label_col], 0, labels.size() - 1, path, row.line);
    out.push_back({row_id(path, r), std::string(trim(row.fields[*sentence_col])), labels.labels()[index]});
  }
  return out;
}

std::vector<Example> load_class_title_body(std::string_view text, const LabelSet& labels,
                                           const std::filesystem::path& path) {
  std::vector<Example> out;
  std::size_t ordinal = 0;
  for (const auto& row : parse_delimited(text, ',', path)) {
    if (row.fields.size() != 3) {
      throw ValidationError(
          fmt::format("{}: row {}: expected 3 fields, got {}", path.string(), row.line, row.fields.size()));
    }
    const auto index = parse_index(row.fields[0], 1, labels.size(), path, row.line);
    const auto title = trim(row.fields[1]);
    const auto body = trim(row.fields[2]);
    std::string joined(title);
    if (!title.empty() && !body.empty()) joined.push_back(' ');
    joined.append(body);
    out.push_back({row_id(path, ++ordinal), std::move(joined), labels.labels()[index - 1]});
  }
  return out;
}

std::vector<Example> load_jsonl(std::string_view text, const LabelSet& labels, const std::filesystem::path& path) {
  std::vector<Example> out;
  std::size_t line_no = 0;
  for (const auto& raw_line : split_lines(text)) {
    ++line_no;
    if (trim(raw_line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(raw_line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(fmt::format("{}: row {}: malformed JSON: {}", path.string(), line_no, e.what()));
    }
    if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string() || !obj.contains("text") ||
        !obj["text"].is_string()) {
      throw ValidationError(
          fmt::format("{}: row {}: expected an object with string fields id and text", path.string(), line_no));
    }
    Example ex{obj["id"].get<std::string>(), obj["text"].get<std::string>(), std::nullopt};
    if (obj.contains("label") && !obj["label"].is_null()) {
      if (!obj["label"].is_string()) {
        throw ValidationError(fmt::format("{}: row {}: label must be a string", path.string(), line_no));
      }
      auto label = obj["label"].get<std::string>();
      if (!labels.contains(label)) {
        throw ValidationError(fmt::format("{}: row {}: unknown label '{}'", path.string(), line_no, label));
      }
      ex.gold_label = std::move(label);
    }
    if (trim(ex.text).empty()) {
      throw ValidationError(fmt::format("{}: row {}: empty text", path.string(), line_no));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

DatasetSplit load_dataset(const std::filesystem::path& path, Adapter adapter, SplitName split,
                          const LabelSet* jsonl_labels) {
  if (!std::filesystem::exists(path)) {
    throw ValidationError(fmt::format("dataset file not found: {}", path.string()));
  }
  const std::string text = read_file(path);

  DatasetSplit out;
  out.split = split;
  switch (adapter) {
    case Adapter::Jsonl:
      if (jsonl_labels == nullptr) {
        throw ValidationError("jsonl adapter requires a label set");
      }
      out.label_set = *jsonl_labels;
      out.examples = load_jsonl(text, out.label_set, path);
      break;
    case Adapter::Sst2:
    case Adapter::Sst5:
      out.label_set = bundled_label_set(to_string(adapter));
      out.examples = load_sst(text, out.label_set, path);
      break;
    case Adapter::AgNews:
    case Adapter::DbPedia:
      out.label_set = bundled_label_set(to_string(adapter));
      out.examples = load_class_title_body(text, out.label_set, path);
      break;
  }
  out.dataset_id = out.label_set.dataset_id();
  if (out.examples.empty()) {
    throw ValidationError(fmt::format("{}: empty dataset", path.string()));
  }
  validate_split(out);
  return out;
}

std::string to_jsonl(const DatasetSplit& split) {
  std::string out;
  for (const auto& example : split.examples) {
    nlohmann::ordered_json obj;
    obj["id"] = example.id;
    obj["text"] = example.text;
    if (example.gold_label) obj["label"] = *example.gold_label;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::size_t> draw_indices(std::size_t population, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first n slots of a full forward shuffle.
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_below(rng, population - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

}  // namespace

DatasetSplit sample_split(const DatasetSplit& split, std::size_t n, std::uint64_t seed) {
  if (n == 0) {
    throw ValidationError("sample size must be positive");
  }
  if (n > split.size()) {
    throw ValidationError(fmt::format("sample size {} exceeds split size {}", n, split.size()));
  }
  DatasetSplit out;
  out.dataset_id = split.dataset_id;
  out.split = split.split;
  out.label_set = split.label_set;
  out.examples.reserve(n);
  for (auto i : draw_indices(split.size(), n, seed)) out.examples.push_back(split.examples[i]);
  return out;
}

std::vector<Example> random_examples(const DatasetSplit& pool, std::size_t k, std::uint64_t seed,
                                     std::string_view exclude_id) {
  if (k == 0) {
    throw ValidationError("number of examples must be positive");
  }
  std::vector<const Example*> candidates;
  candidates.reserve(pool.size());
  for (const auto& example : pool.examples) {
    if (!example.gold_label) {
      throw ValidationError(fmt::format("pool example '{}' has no gold label", example.id));
    }
    if (!exclude_id.empty() && example.id == exclude_id) continue;
    candidates.push_back(&example);
  }
  if (k > candidates.size()) {
    throw ValidationError(fmt::format("requested {} examples but the pool has {}", k, candidates.size()));
  }
  std::vector<Example> out;
  out.reserve(k);
  for (auto i : draw_indices(candidates.size(), k, seed)) out.push_back(*candidates[i]);
  return out;
}

}  // namespace rdc
