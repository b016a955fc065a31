#pragma once

#include <string>
#include <string_view>
#include <variant>

#include "rpo/dataset.h"

namespace rpo {

struct StructuredOutput {
  std::string think;
  std::string personalized;
  std::string raw;
};

struct Tag {
  std::string name;
  bool operator==(const Tag&) const = default;
};
struct Rating {
  int value = 0;
  bool operator==(const Rating&) const = default;
};
struct FreeText {
  std::string text;
  bool operator==(const FreeText&) const = default;
};
using ParsedLabel = std::variant<Tag, Rating, FreeText>;

// Canonical string form: tag name, rating digit, or the free text.
std::string label_text(const ParsedLabel& label);

struct ParseOptions {
  // Accept a bare legal label (classification/regression only) as the
  // personalized answer with an empty think block.
  bool lenient = false;
  TaskKind kind = TaskKind::MovieTagging;
};

// Extracts the single <think> block followed by the single <personalized>
// block. Block contents are trimmed; text between or around the blocks is
// ignored. Error precedence: MultipleBlocks, MissingThink,
// MissingPersonalized, OrderViolation, EmptyPersonalized.
StructuredOutput parse_structured(std::string_view text);
StructuredOutput parse_structured(std::string_view text,
                                  const ParseOptions& options);

std::string format_structured(std::string_view think,
                              std::string_view personalized);

// MovieTagging: case-insensitive exact tag after trimming whitespace and
// trailing punctuation. ProductRating: first standalone integer in 1..5.
// Generation kinds: the text unchanged.
ParsedLabel parse_label(TaskKind kind, std::string_view personalized);

}  // namespace rpo
