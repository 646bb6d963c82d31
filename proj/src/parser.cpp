#include "rdc/parser.hpp"

#include <array>
#include <cctype>
#include <vector>

#include "rdc/util.hpp"

namespace rdc {

namespace {

bool is_trim_char(unsigned char c) {
  if (std::isspace(c)) return true;
  switch (c) {
    case '.': case ',': case ';': case ':': case '!': case '?': case '*': case '"': case '\'':
    case '`': case '(': case ')': case '[': case ']': case '<': case '>': case '_': case '#':
    case '{': case '}':
      return true;
    default:
      return false;
  }
}

std::string_view trim_punct(std::string_view s) {
  while (!s.empty() && is_trim_char(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_trim_char(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  // Curly quotes are multi-byte; strip them as units.
  for (std::string_view q : {"\xE2\x80\x9C", "\xE2\x80\x9D", "\xE2\x80\x98", "\xE2\x80\x99"}) {
    while (s.starts_with(q)) s.remove_prefix(q.size());
    while (s.ends_with(q)) s.remove_suffix(q.size());
  }
  return s;
}

// "1." "2)" "-" "*" "•" at the start of a line.
std::string_view strip_ordinal(std::string_view s) {
  s = trim(s);
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) {
    return trim(s.substr(i + 1));
  }
  if (!s.empty() && (s.front() == '-' || s.front() == '*' || s.front() == '+')) {
    return trim(s.substr(1));
  }
  if (s.starts_with("\xE2\x80\xA2")) return trim(s.substr(3));
  return s;
}

struct LineMatch {
  std::string label;
  std::string tail;
};

constexpr std::array<std::string_view, 9> kKeys = {"category", "label",  "answer",    "prediction", "final answer",
                                                   "sentiment", "topic", "class",     "classification"};
constexpr std::array<std::string_view, 4> kSeparators = {":", "\xE2\x80\x94", "\xE2\x80\x93", " - "};

std::optional<LineMatch> match_line(std::string_view line, const LabelSet& labels, int depth = 0) {
  line = trim(line);
  if (line.empty()) return std::nullopt;
  if (auto label = normalize_label(line, labels)) return LineMatch{*label, ""};

  // "Category: Artist ..." style key prefixes.
  if (depth == 0) {
    const auto body = trim_punct(strip_ordinal(line));
    const auto colon = body.find(':');
    if (colon != std::string_view::npos) {
      const auto key = to_lower_ascii(trim_punct(body.substr(0, colon)));
      for (auto k : kKeys) {
        if (key == k) {
          if (auto m = match_line(body.substr(colon + 1), labels, depth + 1)) return m;
        }
      }
    }
  }

  // Label followed by prose after a separator.
  std::size_t best = std::string_view::npos;
  std::size_t best_len = 0;
  for (auto sep : kSeparators) {
    const auto pos = line.find(sep);
    if (pos != std::string_view::npos && pos < best) {
      best = pos;
      best_len = sep.size();
    }
  }
  if (best != std::string_view::npos && best > 0) {
    if (auto label = normalize_label(line.substr(0, best), labels)) {
      return LineMatch{*label, std::string(trim(line.substr(best + best_len)))};
    }
  }
  return std::nullopt;
}

bool word_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

// Labels appearing as whole words in `text`, dropping any label only seen
// inside a longer matching label ("negative" inside "very negative").
std::vector<std::string> whole_word_labels(std::string_view text, const LabelSet& labels) {
  const std::string folded = to_lower_ascii(text);
  struct Hit {
    std::string label;
    std::size_t begin, end;
  };
  std::vector<Hit> hits;
  for (const auto& label : labels.labels()) {
    const std::string needle = to_lower_ascii(label);
    for (auto pos = folded.find(needle); pos != std::string::npos; pos = folded.find(needle, pos + 1)) {
      const std::size_t end = pos + needle.size();
      const bool left_ok = pos == 0 || !word_char(static_cast<unsigned char>(folded[pos - 1]));
      const bool right_ok = end == folded.size() || !word_char(static_cast<unsigned char>(folded[end]));
      if (left_ok && right_ok) hits.push_back({label, pos, end});
    }
  }
  std::vector<std::string> out;
  for (const auto& h : hits) {
    bool covered = false;
    for (const auto& other : hits) {
      if (&other != &h && other.begin <= h.begin && other.end >= h.end && other.end - other.begin > h.end - h.begin) {
        covered = true;
      }
    }
    if (!covered && std::find(out.begin(), out.end(), h.label) == out.end()) out.push_back(h.label);
  }
  return out;
}

}  // namespace

std::optional<std::string> normalize_label(std::string_view candidate, const LabelSet& labels) {
  auto s = trim_punct(strip_ordinal(trim_punct(candidate)));
  if (s.empty()) return std::nullopt;
  return labels.find_case_insensitive(s);
}

ParsedOutcome parse(std::string_view raw, const LabelSet& labels, const ParserOptions& options) {
  ParsedOutcome out;
  out.raw_text = std::string(raw);
  const auto lines = split_lines(raw);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto m = match_line(lines[i], labels);
    if (!m) continue;
    std::vector<std::string> rest;
    if (!m->tail.empty()) rest.push_back(m->tail);
    for (std::size_t j = i + 1; j < lines.size(); ++j) rest.push_back(lines[j]);
    out.label = std::move(m->label);
    out.rationale = std::string(trim(join(rest, "\n")));
    out.status = ParseStatus::Ok;
    return out;
  }
  if (options.lenient) {
    for (const auto& line : lines) {
      const auto found = whole_word_labels(line, labels);
      if (found.size() == 1) {
        out.label = found.front();
        out.rationale = std::string(trim(raw));
        out.status = ParseStatus::Ok;
        return out;
      }
    }
  }
  out.rationale = out.raw_text;
  return out;
}

}  // namespace rdc
