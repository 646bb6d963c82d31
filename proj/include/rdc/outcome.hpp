#pragma once

#include <optional>
#include <string>

namespace rdc {

enum class ParseStatus { Ok, ParseFailure };

/// Label and rationale extracted from one model reply. `label` is present
/// exactly when `status` is Ok, and is then an exact label-set member.
struct ParsedOutcome {
  std::optional<std::string> label;
  std::string rationale;
  std::string raw_text;
  ParseStatus status = ParseStatus::ParseFailure;

  bool ok() const { return status == ParseStatus::Ok; }
  friend bool operator==(const ParsedOutcome&, const ParsedOutcome&) = default;
};

/// Stand-in label forwarded when a predecessor reply could not be parsed.
inline constexpr const char* kUnknownLabel = "UNKNOWN";

}  // namespace rdc
