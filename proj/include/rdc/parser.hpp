#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "rdc/corpus.hpp"
#include "rdc/outcome.hpp"

namespace rdc {

struct ParserOptions {
  /// Falls back to a whole-word label search when no line matches. Off by
  /// default; turning it on changes what counts as a parse failure.
  bool lenient = false;
};

/// Canonical label-set member for `candidate` after trimming whitespace and
/// punctuation, dropping a leading ordinal or bullet ("2.", "-") and
/// surrounding quotes, and folding case. No fuzzy matching.
std::optional<std::string> normalize_label(std::string_view candidate, const LabelSet& labels);

/// Scans lines top to bottom for the first one naming a label; everything after
/// it is the rationale. A label line may carry trailing prose after ":", "—"
/// or " - ", which is prepended to the rationale. Lines of the form
/// "Category: X" (also Label/Answer/Prediction/...) are accepted. Never throws.
ParsedOutcome parse(std::string_view raw, const LabelSet& labels, const ParserOptions& options = {});

}  // namespace rdc
