#include "rdc/synthetic.hpp"

#include <memory>
#include <unordered_map>

#include <fmt/format.h>

#include "rdc/error.hpp"
#include "rdc/util.hpp"

namespace rdc {

namespace {
constexpr std::string_view kTargetIntro = "The sentence that I want you to predict is\n";
constexpr std::string_view kTargetEnd = "\n######";
constexpr std::string_view kPriorIntro = "Here are the judgments made by others regarding this sentence.\nCategory: ";
}  // namespace

std::optional<std::string> extract_target(std::string_view prompt) {
  const auto start = prompt.find(kTargetIntro);
  if (start == std::string_view::npos) return std::nullopt;
  const auto body = start + kTargetIntro.size();
  const auto end = prompt.find(kTargetEnd, body);
  if (end == std::string_view::npos) return std::nullopt;
  return std::string(prompt.substr(body, end - body));
}

std::optional<std::string> extract_prior_label(std::string_view prompt) {
  const auto start = prompt.find(kPriorIntro);
  if (start == std::string_view::npos) return std::nullopt;
  const auto body = start + kPriorIntro.size();
  const auto end = prompt.find('\n', body);
  return std::string(prompt.substr(body, end == std::string_view::npos ? std::string_view::npos : end - body));
}

MockRule synthetic_annotator_rule(const DatasetSplit& eval, SyntheticAnnotatorSpec spec) {
  for (double p : {spec.p_bare, spec.p_primed}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("synthetic annotator probabilities must be in [0, 1]");
  }
  auto gold = std::make_shared<std::unordered_map<std::string, std::string>>();
  for (const auto& ex : eval.examples) {
    if (ex.gold_label) gold->emplace(ex.text, *ex.gold_label);
  }
  auto labels = std::make_shared<const std::vector<std::string>>(eval.label_set.labels());
  return MockRule{nullptr, [gold, labels, spec](const MockCall& call) {
                    const auto target = extract_target(call.prompt);
                    const auto it = target ? gold->find(*target) : gold->end();
                    if (it == gold->end()) {
                      return fmt::format("{}\nNo recognizable sentence in the prompt.", labels->front());
                    }
                    const auto prior = extract_prior_label(call.prompt);
                    const double p = (prior && *prior == it->second) ? spec.p_primed : spec.p_bare;
                    std::string answer = it->second;
                    if (call.uniform() >= p && labels->size() > 1) {
                      auto pick = uniform_below(call.rng, labels->size() - 1);
                      for (const auto& l : *labels) {
                        if (l == it->second) continue;
                        if (pick-- == 0) {
                          answer = l;
                          break;
                        }
                      }
                    }
                    return fmt::format("{}\nSynthetic rationale {:016x}.", answer, call.draw);
                  }};
}

}  // namespace rdc
