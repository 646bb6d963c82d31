#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rdc/corpus.hpp"
#include "rdc/outcome.hpp"

namespace rdc {

enum class Strategy { ZS, FS, CoT, USC, FsSimi, CoTSimi, UscSimi, RDC };

inline constexpr std::array<Strategy, 8> kAllStrategies = {Strategy::ZS,     Strategy::FS,      Strategy::CoT,
                                                           Strategy::USC,    Strategy::FsSimi,  Strategy::CoTSimi,
                                                           Strategy::UscSimi, Strategy::RDC};

/// Column names as printed in comparison tables: ZS, FS, CoT, USC, FS-simi, ...
std::string_view display_name(Strategy strategy);
/// Accepts display names and lowercase/underscore spellings ("fs_simi", "rdc").
Strategy parse_strategy(std::string_view name);

bool is_usc(Strategy strategy);
/// Strategies whose in-context examples come from similarity retrieval by default.
bool prefers_similar_examples(Strategy strategy);

enum class Role { System, User };
std::string_view to_string(Role role);

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct PromptContext {
  std::string target_text;
  LabelSet label_set;
  std::vector<Example> examples;
  /// RDC rounds >= 2: the immediately preceding round's outcome.
  std::optional<ParsedOutcome> previous;
  /// USC aggregation step: the sampled outcomes, in sample order.
  std::optional<std::vector<ParsedOutcome>> references;
  int round_index = 1;

  friend bool operator==(const PromptContext&, const PromptContext&) = default;
};

struct RenderedPrompt {
  std::vector<ChatMessage> messages;
  Strategy strategy = Strategy::ZS;
  std::string context_digest;

  /// Digest of the messages alone; keys the transcript file.
  std::string prompt_digest() const;
  /// All message contents joined with blank lines.
  std::string flat_text() const;
};

/// Template files keyed by name ("system.txt", "few_shot.txt", ...). Placeholders
/// are `{{name}}`; substituted values are never rescanned.
class TemplateSet {
 public:
  static TemplateSet builtin();
  /// Loads every built-in template name from `dir`; a missing file is an error.
  static TemplateSet from_directory(const std::filesystem::path& dir);

  const std::string& get(const std::string& name) const;
  const std::map<std::string, std::string>& files() const { return files_; }

 private:
  std::map<std::string, std::string> files_;
};

std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& values);

enum class Scaffold { Topic, Sentiment };
/// Sentiment scaffold for the SST datasets, topic scaffold otherwise.
Scaffold scaffold_for(const LabelSet& labels);

class PromptEngine {
 public:
  explicit PromptEngine(TemplateSet templates = TemplateSet::builtin());

  /// One system message carrying the instruction and category list, then one
  /// user message with scaffold, examples, target, peer judgments and format.
  RenderedPrompt render(Strategy strategy, const PromptContext& ctx) const;

  /// The output-format block shared by every strategy.
  std::string format_contract(const LabelSet& labels) const;

 private:
  TemplateSet templates_;
};

RenderedPrompt render(Strategy strategy, const PromptContext& ctx);
std::string format_contract(const LabelSet& labels);

/// SHA-256 over a canonical JSON serialization. Example order is part of the
/// canonical form.
std::string context_digest(const PromptContext& ctx);

}  // namespace rdc
