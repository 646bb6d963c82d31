#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rdc {

/// Ordered class names for one annotation task. Names are unique under
/// case-insensitive comparison, which keeps label normalization unambiguous.
class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(std::string dataset_id, std::vector<std::string> labels);

  const std::string& dataset_id() const { return dataset_id_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  bool contains(std::string_view label) const;
  /// The member equal to `candidate` ignoring ASCII case, if any.
  std::optional<std::string> find_case_insensitive(std::string_view candidate) const;

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  std::string dataset_id_;
  std::vector<std::string> labels_;
};

/// Label sets for the four bundled benchmarks: "sst2", "sst5", "agnews",
/// "dbpedia". Aliases such as "SST-2" or "AG News" are accepted.
LabelSet bundled_label_set(std::string_view dataset_id);
std::optional<std::string> canonical_dataset_id(std::string_view name);

struct Example {
  std::string id;
  std::string text;
  std::optional<std::string> gold_label;

  friend bool operator==(const Example&, const Example&) = default;
};

enum class SplitName { Pool, Eval };

std::string_view to_string(SplitName split);
SplitName parse_split_name(std::string_view name);

struct DatasetSplit {
  std::string dataset_id;
  SplitName split = SplitName::Eval;
  std::vector<Example> examples;
  LabelSet label_set;

  std::size_t size() const { return examples.size(); }
  const Example* find(std::string_view id) const;
};

/// Checks id uniqueness, label membership and the pool labeling rule.
void validate_split(const DatasetSplit& split);

enum class Adapter { Jsonl, Sst2, Sst5, AgNews, DbPedia };

std::string_view to_string(Adapter adapter);
Adapter parse_adapter(std::string_view name);

/// Loads and validates one split.
///
/// Jsonl reads `{id, text, label?}` objects and needs `jsonl_labels`. The
/// named adapters read the public layouts of their benchmark:
///   sst2 / sst5   TSV with a header naming `sentence` and `label` (class index)
///   agnews        headerless CSV `class(1-4),title,description`
///   dbpedia       headerless CSV `class(1-14),title,abstract`
/// Ids for named adapters are `<file stem>-<data row>`.
DatasetSplit load_dataset(const std::filesystem::path& path, Adapter adapter, SplitName split,
                          const LabelSet* jsonl_labels = nullptr);

/// Generic JSONL rendering of a split; `load_dataset(Jsonl)` reads it back.
std::string to_jsonl(const DatasetSplit& split);

/// Seeded uniform sample of `n` examples without replacement, in draw order.
DatasetSplit sample_split(const DatasetSplit& split, std::size_t n, std::uint64_t seed);

/// Seeded draw of `k` distinct gold-labeled pool examples. `exclude_id`, when
/// non-empty, is removed from the candidates first.
std::vector<Example> random_examples(const DatasetSplit& pool, std::size_t k, std::uint64_t seed,
                                     std::string_view exclude_id = {});

}  // namespace rdc
