#include "rpo/error.h"

namespace rpo {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::LabelError: return "LabelError";
    case ErrorCode::InsufficientUsers: return "InsufficientUsers";
    case ErrorCode::EmptyUserHistory: return "EmptyUserHistory";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::EmptyProfile: return "EmptyProfile";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::PlaceholderMissing: return "PlaceholderMissing";
    case ErrorCode::ContextEmpty: return "ContextEmpty";
    case ErrorCode::TokenBudgetExceeded: return "TokenBudgetExceeded";
    case ErrorCode::ModeContextMismatch: return "ModeContextMismatch";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::LogprobsUnsupported: return "LogprobsUnsupported";
    case ErrorCode::HttpError: return "HttpError";
    case ErrorCode::MissingThink: return "MissingThink";
    case ErrorCode::MissingPersonalized: return "MissingPersonalized";
    case ErrorCode::MultipleBlocks: return "MultipleBlocks";
    case ErrorCode::OrderViolation: return "OrderViolation";
    case ErrorCode::EmptyPersonalized: return "EmptyPersonalized";
    case ErrorCode::UnknownTag: return "UnknownTag";
    case ErrorCode::NoRatingFound: return "NoRatingFound";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::EmptyTrace: return "EmptyTrace";
    case ErrorCode::InvalidTrace: return "InvalidTrace";
    case ErrorCode::GroupSizeMismatch: return "GroupSizeMismatch";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::PositiveLogprob: return "PositiveLogprob";
    case ErrorCode::EmptyPool: return "EmptyPool";
  }
  return "Unknown";
}

std::optional<ErrorCode> parse_error_code(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::EmptyPool); ++i) {
    const auto code = static_cast<ErrorCode>(i);
    if (to_string(code) == name) return code;
  }
  return std::nullopt;
}

namespace {

std::string decorate(ErrorCode code, const std::string& message,
                     std::optional<std::size_t> line) {
  std::string out(to_string(code));
  if (line) out += "(line " + std::to_string(*line) + ")";
  if (!message.empty()) out += ": " + message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::size_t> line)
    : std::runtime_error(decorate(code, message, line)),
      code_(code),
      line_(line) {}

}  // namespace rpo
