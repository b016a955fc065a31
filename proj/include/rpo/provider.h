#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rpo/error.h"

namespace rpo {

enum class Role { BaseModel, ReflectionModel, TeacherModel, ReferenceModel };

inline constexpr std::array<Role, 4> kAllRoles = {
    Role::BaseModel, Role::ReflectionModel, Role::TeacherModel,
    Role::ReferenceModel};

std::string_view to_string(Role role);
// "base" | "reflection" | "teacher" | "reference", or the enum spelling.
Role parse_role(std::string_view name);
// Short lowercase key used in config files and env var names.
std::string_view role_key(Role role);

struct SamplingConfig {
  double temperature = 1.0;
  double top_p = 0.9;
  std::size_t n_samples = 16;
  std::size_t max_new_tokens = 512;
  std::optional<std::uint64_t> seed;

  // Nucleus sampling used for RL candidate generation.
  static SamplingConfig rollout();
  // Single temperature-0 sample.
  static SamplingConfig greedy();

  void validate() const;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
};
using LogprobSequence = std::vector<TokenLogprob>;

struct CompletionRequest {
  std::string prompt;
  SamplingConfig sampling = SamplingConfig::greedy();
  bool want_logprobs = false;
  Role role = Role::BaseModel;
};

struct Usage {
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

struct CompletionResult {
  std::vector<std::string> texts;
  std::optional<std::vector<LogprobSequence>> logprob_traces;
  Usage usage;
  double latency_ms = 0.0;
};

// One slot of a batch: exactly one of result / error is set.
struct BatchSlot {
  std::optional<CompletionResult> result;
  std::optional<Error> error;

  bool ok() const { return result.has_value(); }
};

struct EndpointConfig {
  std::string url;  // scheme://host[:port][/prefix]
  std::string model;
  int timeout_ms = 60000;
  int max_retries = 5;
  int initial_backoff_ms = 500;
  std::string chat_path = "/v1/chat/completions";
  std::string completions_path = "/v1/completions";
  // Name of the env var holding the bearer token. Empty means
  // RPO_API_KEY_<ROLE>.
  std::string api_key_env;
  bool supports_logprobs = false;
  bool supports_scoring = false;
  // When false, n samples are drawn as n single-sample requests.
  bool supports_n = true;
};

// A completion source for one or more roles.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;

  virtual CompletionResult complete(const CompletionRequest& request) const = 0;

  // Teacher-forced per-token log-probs of `completion` given `prompt`.
  virtual LogprobSequence score(std::string_view prompt,
                                std::string_view completion,
                                Role role) const = 0;
};

// Deterministic scripted backend. Script lines are JSON objects:
//   {"role": str, "prompt_hash": str, "texts": [str], "logprobs": [[float]]?}
// prompt_hash is stable_hash(prompt) or "*" for a per-role fallback. Two
// optional extensions are understood: "prompt_contains" (substring key, tried
// after exact hashes) and "error" (an ErrorCode name raised instead of
// answering). Responses cycle through `texts` when more samples are asked
// for than were scripted.
class MockBackend : public CompletionBackend {
 public:
  struct Entry {
    Role role = Role::BaseModel;
    std::string prompt_hash;
    std::optional<std::string> prompt_contains;
    std::vector<std::string> texts;
    std::optional<std::vector<std::vector<double>>> logprobs;
    std::optional<ErrorCode> error;
  };

  explicit MockBackend(std::vector<Entry> entries);
  static MockBackend from_jsonl(std::string_view content);
  static MockBackend load(const std::filesystem::path& path);

  CompletionResult complete(const CompletionRequest& request) const override;
  LogprobSequence score(std::string_view prompt, std::string_view completion,
                        Role role) const override;

  const std::vector<Entry>& entries() const { return entries_; }

 private:
  const Entry* lookup(Role role, std::string_view prompt) const;

  std::vector<Entry> entries_;
};

// OpenAI-compatible chat-completions backend for a single endpoint.
// 429 and 5xx responses are retried up to max_retries times with jittered
// exponential backoff; the last failure is then surfaced.
class HttpBackend : public CompletionBackend {
 public:
  HttpBackend(EndpointConfig config, Role role);

  CompletionResult complete(const CompletionRequest& request) const override;
  LogprobSequence score(std::string_view prompt, std::string_view completion,
                        Role role) const override;

  const EndpointConfig& config() const { return config_; }

 private:
  std::string post_with_retry(const std::string& path,
                              const std::string& body) const;
  CompletionResult complete_once(const CompletionRequest& request,
                                 std::size_t n) const;

  EndpointConfig config_;
  Role role_;
  std::string api_key_;
};

// Routes requests to the backend configured for their role and enforces the
// result contract: |texts| == n_samples, log-prob traces present iff
// requested, and no log-probs from the black-box base model.
class Providers {
 public:
  void set(Role role, std::shared_ptr<const CompletionBackend> backend);
  void set_all(std::shared_ptr<const CompletionBackend> backend);
  bool has(Role role) const;

  CompletionResult complete(const CompletionRequest& request) const;

  // Results are positionally aligned with `requests`; at most max_in_flight
  // requests are outstanding at once and a failure only fills its own slot.
  std::vector<BatchSlot> complete_batch(
      std::span<const CompletionRequest> requests,
      std::size_t max_in_flight) const;

  LogprobSequence score_logprobs(std::string_view prompt,
                                 std::string_view completion, Role role) const;

 private:
  const CompletionBackend& backend(Role role) const;

  std::map<Role, std::shared_ptr<const CompletionBackend>> backends_;
};

// Text embedding source for the embedding retrieval backend.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<std::vector<double>> embed(
      std::span<const std::string> texts) const = 0;
};

// POSTs {"input": [...]} to config.url and reads {"embeddings": [[...]]}.
class HttpEmbedder : public Embedder {
 public:
  explicit HttpEmbedder(EndpointConfig config);
  std::vector<std::vector<double>> embed(
      std::span<const std::string> texts) const override;

 private:
  EndpointConfig config_;
};

}  // namespace rpo
