#include "rpo/parser.h"

#include <cctype>
#include <optional>

#include "rpo/error.h"
#include "rpo/text.h"

namespace rpo {
namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kPersOpen = "<personalized>";
constexpr std::string_view kPersClose = "</personalized>";

struct TagScan {
  std::size_t count = 0;
  std::size_t first = std::string_view::npos;
};

TagScan scan(std::string_view text, std::string_view tag) {
  TagScan s;
  for (auto pos = text.find(tag); pos != std::string_view::npos;
       pos = text.find(tag, pos + tag.size())) {
    if (s.count++ == 0) s.first = pos;
  }
  return s;
}

bool is_alnum(unsigned char c) { return std::isalnum(c) != 0; }

std::optional<std::string> bare_label(TaskKind kind, std::string_view text) {
  const auto t = trim(text);
  if (t.empty()) return std::nullopt;
  switch (metric_profile(kind)) {
    case MetricProfile::Classification:
      if (is_movie_tag(to_lower(t))) return std::string(t);
      return std::nullopt;
    case MetricProfile::Regression:
      if (parse_strict_rating(t)) return std::string(t);
      return std::nullopt;
    case MetricProfile::Generation:
      return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace

std::string label_text(const ParsedLabel& label) {
  if (const auto* tag = std::get_if<Tag>(&label)) return tag->name;
  if (const auto* rating = std::get_if<Rating>(&label)) {
    return std::to_string(rating->value);
  }
  return std::get<FreeText>(label).text;
}

StructuredOutput parse_structured(std::string_view text) {
  const auto think_open = scan(text, kThinkOpen);
  const auto think_close = scan(text, kThinkClose);
  const auto pers_open = scan(text, kPersOpen);
  const auto pers_close = scan(text, kPersClose);

  if (think_open.count > 1 || think_close.count > 1 || pers_open.count > 1 ||
      pers_close.count > 1) {
    throw Error(ErrorCode::MultipleBlocks, "more than one block of a kind");
  }
  if (think_open.count == 0 || think_close.count == 0) {
    throw Error(ErrorCode::MissingThink, "no complete <think> block");
  }
  if (pers_open.count == 0 || pers_close.count == 0) {
    throw Error(ErrorCode::MissingPersonalized,
                "no complete <personalized> block");
  }
  const auto think_begin = think_open.first + kThinkOpen.size();
  const auto pers_begin = pers_open.first + kPersOpen.size();
  if (!(think_begin <= think_close.first &&
        think_close.first + kThinkClose.size() <= pers_open.first &&
        pers_begin <= pers_close.first)) {
    throw Error(ErrorCode::OrderViolation,
                "blocks must appear as <think>...</think> then "
                "<personalized>...</personalized>");
  }

  StructuredOutput out;
  out.think = std::string(
      trim(text.substr(think_begin, think_close.first - think_begin)));
  out.personalized = std::string(
      trim(text.substr(pers_begin, pers_close.first - pers_begin)));
  out.raw = std::string(text);
  if (out.personalized.empty()) {
    throw Error(ErrorCode::EmptyPersonalized, "personalized block is empty");
  }
  return out;
}

StructuredOutput parse_structured(std::string_view text,
                                  const ParseOptions& options) {
  try {
    return parse_structured(text);
  } catch (const Error& e) {
    const bool missing = e.code() == ErrorCode::MissingThink ||
                         e.code() == ErrorCode::MissingPersonalized;
    if (!options.lenient || !missing) throw;
    // Salvage only outputs that carry no tags at all.
    if (text.find('<') != std::string_view::npos) throw;
    auto label = bare_label(options.kind, text);
    if (!label) throw;
    return {"", std::move(*label), std::string(text)};
  }
}

std::string format_structured(std::string_view think,
                              std::string_view personalized) {
  std::string out;
  out.reserve(think.size() + personalized.size() + 48);
  out += kThinkOpen;
  out += think;
  out += kThinkClose;
  out += '\n';
  out += kPersOpen;
  out += personalized;
  out += kPersClose;
  return out;
}

ParsedLabel parse_label(TaskKind kind, std::string_view personalized) {
  if (trim(personalized).empty()) {
    throw Error(ErrorCode::InvalidArgument, "personalized answer is empty");
  }
  switch (metric_profile(kind)) {
    case MetricProfile::Classification: {
      auto t = trim(personalized);
      while (!t.empty() && std::ispunct(static_cast<unsigned char>(t.back()))) {
        t.remove_suffix(1);
        t = trim(t);
      }
      auto candidate = to_lower(t);
      if (!is_movie_tag(candidate)) {
        throw Error(ErrorCode::UnknownTag,
                    "\"" + std::string(t) + "\" is not a known tag");
      }
      return Tag{std::move(candidate)};
    }
    case MetricProfile::Regression: {
      const auto text = personalized;
      std::size_t i = 0;
      while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (!std::isdigit(c)) {
          ++i;
          continue;
        }
        std::size_t j = i;
        while (j < text.size() &&
               std::isdigit(static_cast<unsigned char>(text[j]))) {
          ++j;
        }
        const bool left_ok =
            i == 0 || !is_alnum(static_cast<unsigned char>(text[i - 1]));
        const bool right_ok =
            j == text.size() || !is_alnum(static_cast<unsigned char>(text[j]));
        if (left_ok && right_ok && j - i == 1 && text[i] >= '1' &&
            text[i] <= '5') {
          return Rating{text[i] - '0'};
        }
        i = j;
      }
      throw Error(ErrorCode::NoRatingFound,
                  "no standalone rating between 1 and 5");
    }
    case MetricProfile::Generation:
      return FreeText{std::string(personalized)};
  }
  return FreeText{std::string(personalized)};
}

}  // namespace rpo
