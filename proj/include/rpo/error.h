#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rpo {

enum class ErrorCode {
  // generic
  InvalidArgument,
  IoError,
  ConfigError,
  NotFound,
  // dataset
  SchemaError,
  LabelError,
  InsufficientUsers,
  EmptyUserHistory,
  // retrieval
  EmptyQuery,
  EmptyProfile,
  BackendUnavailable,
  // prompt
  PlaceholderMissing,
  ContextEmpty,
  TokenBudgetExceeded,
  ModeContextMismatch,
  // provider
  Timeout,
  RateLimited,
  MalformedResponse,
  LogprobsUnsupported,
  HttpError,
  // parser
  MissingThink,
  MissingPersonalized,
  MultipleBlocks,
  OrderViolation,
  EmptyPersonalized,
  UnknownTag,
  NoRatingFound,
  // metrics / rl
  LengthMismatch,
  Empty,
  EmptyTrace,
  InvalidTrace,
  GroupSizeMismatch,
  EmptySequence,
  PositiveLogprob,
  EmptyPool,
};

std::string_view to_string(ErrorCode code);
std::optional<ErrorCode> parse_error_code(std::string_view name);

// Every failure surfaced by the library carries a machine-checkable code.
// SchemaError additionally carries the 1-based line of the offending record.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> line = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> line_;
};

}  // namespace rpo
