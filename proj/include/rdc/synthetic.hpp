#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rdc/corpus.hpp"
#include "rdc/gateway.hpp"

namespace rdc {

/// Target sentence of a rendered prompt (the line block between
/// "The sentence that I want you to predict is" and the closing "######").
std::optional<std::string> extract_target(std::string_view prompt);
/// Label forwarded to an RDC round from the previous round, if the prompt has one.
std::optional<std::string> extract_prior_label(std::string_view prompt);

struct SyntheticAnnotatorSpec {
  /// Probability of answering with the gold label when no correct prior label is shown.
  double p_bare = 0.6;
  /// Probability of answering with the gold label when the prompt carries the correct prior label.
  double p_primed = 0.8;
};

/// Catch-all mock rule simulating an annotator that knows the gold labels of
/// `eval`. Wrong answers are drawn uniformly from the other labels. Replies
/// follow the output format: label line, then a rationale line.
MockRule synthetic_annotator_rule(const DatasetSplit& eval, SyntheticAnnotatorSpec spec);

}  // namespace rdc
