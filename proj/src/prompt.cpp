#include "rdc/prompt.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include "rdc/error.hpp"
#include "rdc/util.hpp"

namespace rdc {

namespace detail {
const std::map<std::string, std::string>& builtin_template_files();
}

std::string_view display_name(Strategy strategy) {
  switch (strategy) {
    case Strategy::ZS: return "ZS";
    case Strategy::FS: return "FS";
    case Strategy::CoT: return "CoT";
    case Strategy::USC: return "USC";
    case Strategy::FsSimi: return "FS-simi";
    case Strategy::CoTSimi: return "CoT-simi";
    case Strategy::UscSimi: return "USC-simi";
    case Strategy::RDC: return "RDC";
  }
  return "ZS";
}

Strategy parse_strategy(std::string_view name) {
  std::string key = to_lower_ascii(trim(name));
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  for (Strategy s : kAllStrategies) {
    if (to_lower_ascii(display_name(s)) == key) return s;
  }
  throw ValidationError(fmt::format("unknown strategy '{}'", name));
}

bool is_usc(Strategy strategy) { return strategy == Strategy::USC || strategy == Strategy::UscSimi; }

bool prefers_similar_examples(Strategy strategy) {
  return strategy == Strategy::FsSimi || strategy == Strategy::CoTSimi || strategy == Strategy::UscSimi ||
         strategy == Strategy::RDC;
}

std::string_view to_string(Role role) { return role == Role::System ? "system" : "user"; }

namespace {

nlohmann::json messages_json(const std::vector<ChatMessage>& messages) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : messages) out.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return out;
}

const std::vector<std::string>& required_templates() {
  static const std::vector<std::string> names = {"system.txt",        "format.txt",    "zero_shot.txt",
                                                 "few_shot.txt",      "cot.topic.txt", "cot.sentiment.txt",
                                                 "usc_aggregate.txt", "rdc_collab.txt"};
  return names;
}

std::string strip_final_newline(std::string s) {
  if (!s.empty() && s.back() == '\n') s.pop_back();
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::string RenderedPrompt::prompt_digest() const { return sha256_hex(messages_json(messages).dump()); }

std::string RenderedPrompt::flat_text() const {
  std::string out;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += messages[i].content;
  }
  return out;
}

TemplateSet TemplateSet::builtin() {
  TemplateSet set;
  for (const auto& [name, content] : detail::builtin_template_files()) {
    set.files_[name] = strip_final_newline(content);
  }
  return set;
}

TemplateSet TemplateSet::from_directory(const std::filesystem::path& dir) {
  TemplateSet set;
  for (const auto& name : required_templates()) {
    set.files_[name] = strip_final_newline(read_file(dir / name));
  }
  return set;
}

const std::string& TemplateSet::get(const std::string& name) const {
  const auto it = files_.find(name);
  if (it == files_.end()) {
    throw ValidationError(fmt::format("missing prompt template '{}'", name));
  }
  return it->second;
}

std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      throw ValidationError("template has an unterminated placeholder");
    }
    out.append(tmpl.substr(pos, open - pos));
    const std::string name(trim(tmpl.substr(open + 2, close - open - 2)));
    const auto it = values.find(name);
    if (it == values.end()) {
      throw ValidationError(fmt::format("template placeholder '{{{{{}}}}}' has no value", name));
    }
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

Scaffold scaffold_for(const LabelSet& labels) {
  const auto id = canonical_dataset_id(labels.dataset_id());
  return (id == "sst2" || id == "sst5") ? Scaffold::Sentiment : Scaffold::Topic;
}

PromptEngine::PromptEngine(TemplateSet templates) : templates_(std::move(templates)) {
  for (const auto& name : required_templates()) templates_.get(name);
}

std::string PromptEngine::format_contract(const LabelSet& labels) const {
  if (labels.empty()) {
    throw ValidationError("label set is empty");
  }
  return substitute(templates_.get("format.txt"), {{"labels", join(labels.labels(), ", ")}});
}

namespace {

void check_context(Strategy strategy, const PromptContext& ctx) {
  if (ctx.label_set.empty()) {
    throw ValidationError("prompt context: label set is empty");
  }
  if (trim(ctx.target_text).empty()) {
    throw ValidationError("prompt context: target text is empty");
  }
  if (ctx.round_index < 1) {
    throw ValidationError("prompt context: round_index must be positive");
  }
  if (strategy != Strategy::RDC && ctx.round_index != 1) {
    throw ValidationError(fmt::format("prompt context: {} has a single round", display_name(strategy)));
  }
  const bool wants_previous = strategy == Strategy::RDC && ctx.round_index >= 2;
  if (wants_previous != ctx.previous.has_value()) {
    throw ValidationError(wants_previous ? "prompt context: RDC round >= 2 needs the previous outcome"
                                         : "prompt context: previous outcome only applies to RDC rounds >= 2");
  }
  const bool aggregation = ctx.references.has_value();
  if (aggregation && !is_usc(strategy)) {
    throw ValidationError("prompt context: references only apply to USC aggregation");
  }
  if (aggregation && ctx.references->size() < 2) {
    throw ValidationError("prompt context: USC aggregation needs at least two references");
  }
  if (strategy == Strategy::ZS && !ctx.examples.empty()) {
    throw ValidationError("prompt context: zero-shot takes no examples");
  }
  if (strategy != Strategy::ZS && !aggregation && ctx.examples.empty()) {
    throw ValidationError(fmt::format("prompt context: {} needs at least one example", display_name(strategy)));
  }
  for (const auto& ex : ctx.examples) {
    if (!ex.gold_label || !ctx.label_set.contains(*ex.gold_label)) {
      throw ValidationError(fmt::format("prompt context: example '{}' lacks a valid gold label", ex.id));
    }
  }
}

std::string render_examples(const std::vector<Example>& examples) {
  std::vector<std::string> blocks;
  blocks.reserve(examples.size());
  for (const auto& ex : examples) blocks.push_back(fmt::format("Sentence: {}\nCategory: {}", ex.text, *ex.gold_label));
  return join(blocks, "\n");
}

std::string render_references(const std::vector<ParsedOutcome>& refs) {
  std::vector<std::string> blocks;
  blocks.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    blocks.push_back(fmt::format("The {} reference is:\nCategory: {}\nReason: {}", ordinal_word(i + 1),
                                 refs[i].label.value_or(kUnknownLabel), refs[i].rationale));
  }
  return join(blocks, "\n");
}

std::string capitalized(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace

RenderedPrompt PromptEngine::render(Strategy strategy, const PromptContext& ctx) const {
  check_context(strategy, ctx);

  std::map<std::string, std::string> values;
  values["labels"] = join(ctx.label_set.labels(), ", ");
  values["label_count"] = number_word(ctx.label_set.size());
  values["target"] = ctx.target_text;
  values["format"] = format_contract(ctx.label_set);

  std::string body_template;
  if (ctx.references) {
    body_template = "usc_aggregate.txt";
    values["references"] = render_references(*ctx.references);
    values["reference_count"] = number_word(ctx.references->size());
    values["reference_count_title"] = capitalized(number_word(ctx.references->size()));
  } else {
    switch (strategy) {
      case Strategy::ZS:
        body_template = "zero_shot.txt";
        break;
      case Strategy::CoT:
      case Strategy::CoTSimi:
        body_template = scaffold_for(ctx.label_set) == Scaffold::Sentiment ? "cot.sentiment.txt" : "cot.topic.txt";
        break;
      case Strategy::RDC:
        body_template = ctx.previous ? "rdc_collab.txt" : "few_shot.txt";
        break;
      case Strategy::FS:
      case Strategy::FsSimi:
      case Strategy::USC:
      case Strategy::UscSimi:
        body_template = "few_shot.txt";
        break;
    }
    values["examples"] = render_examples(ctx.examples);
    if (ctx.previous) {
      values["previous_label"] = ctx.previous->label.value_or(kUnknownLabel);
      values["previous_rationale"] = ctx.previous->rationale;
    }
  }

  RenderedPrompt out;
  out.strategy = strategy;
  out.messages.push_back({Role::System, substitute(templates_.get("system.txt"), values)});
  out.messages.push_back({Role::User, substitute(templates_.get(body_template), values)});
  out.context_digest = context_digest(ctx);
  return out;
}

RenderedPrompt render(Strategy strategy, const PromptContext& ctx) {
  static const PromptEngine engine;
  return engine.render(strategy, ctx);
}

std::string format_contract(const LabelSet& labels) {
  static const PromptEngine engine;
  return engine.format_contract(labels);
}

namespace {

nlohmann::json outcome_json(const ParsedOutcome& o) {
  return {{"label", o.label ? nlohmann::json(*o.label) : nlohmann::json(nullptr)},
          {"rationale", o.rationale},
          {"raw_text", o.raw_text},
          {"status", o.ok() ? "ok" : "parse_failure"}};
}

}  // namespace

std::string context_digest(const PromptContext& ctx) {
  nlohmann::json j;
  j["target_text"] = ctx.target_text;
  j["label_set"] = {{"dataset_id", ctx.label_set.dataset_id()}, {"labels", ctx.label_set.labels()}};
  nlohmann::json examples = nlohmann::json::array();
  for (const auto& ex : ctx.examples) {
    examples.push_back({{"id", ex.id},
                        {"text", ex.text},
                        {"gold_label", ex.gold_label ? nlohmann::json(*ex.gold_label) : nlohmann::json(nullptr)}});
  }
  j["examples"] = std::move(examples);
  j["previous"] = ctx.previous ? outcome_json(*ctx.previous) : nlohmann::json(nullptr);
  if (ctx.references) {
    nlohmann::json refs = nlohmann::json::array();
    for (const auto& r : *ctx.references) refs.push_back(outcome_json(r));
    j["references"] = std::move(refs);
  } else {
    j["references"] = nullptr;
  }
  j["round_index"] = ctx.round_index;
  return sha256_hex(j.dump());
}

}  // namespace rdc
