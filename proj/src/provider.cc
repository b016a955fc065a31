#include "rpo/provider.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include "http_transport.h"
#include "json.hpp"
#include "rpo/io.h"
#include "rpo/parallel.h"
#include "rpo/text.h"

namespace rpo {

using json = nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::BaseModel: return "BaseModel";
    case Role::ReflectionModel: return "ReflectionModel";
    case Role::TeacherModel: return "TeacherModel";
    case Role::ReferenceModel: return "ReferenceModel";
  }
  return "";
}

std::string_view role_key(Role role) {
  switch (role) {
    case Role::BaseModel: return "base";
    case Role::ReflectionModel: return "reflection";
    case Role::TeacherModel: return "teacher";
    case Role::ReferenceModel: return "reference";
  }
  return "";
}

Role parse_role(std::string_view name) {
  for (Role role : kAllRoles) {
    if (name == to_string(role) || to_lower(name) == role_key(role)) {
      return role;
    }
  }
  throw Error(ErrorCode::InvalidArgument,
              "unknown role \"" + std::string(name) + "\"");
}

SamplingConfig SamplingConfig::rollout() {
  SamplingConfig cfg;
  cfg.temperature = 1.0;
  cfg.top_p = 0.9;
  cfg.n_samples = 16;
  return cfg;
}

SamplingConfig SamplingConfig::greedy() {
  SamplingConfig cfg;
  cfg.temperature = 0.0;
  cfg.top_p = 1.0;
  cfg.n_samples = 1;
  return cfg;
}

void SamplingConfig::validate() const {
  if (!(temperature >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "top_p must lie in (0, 1]");
  }
  if (n_samples < 1) {
    throw Error(ErrorCode::InvalidArgument, "n_samples must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// MockBackend

MockBackend::MockBackend(std::vector<Entry> entries)
    : entries_(std::move(entries)) {
  for (const auto& e : entries_) {
    if (e.texts.empty() && !e.error) {
      throw Error(ErrorCode::ConfigError, "mock entry without texts");
    }
    if (e.logprobs && e.logprobs->size() != e.texts.size()) {
      throw Error(ErrorCode::ConfigError,
                  "mock entry logprobs must align with texts");
    }
  }
}

MockBackend MockBackend::from_jsonl(std::string_view content) {
  std::vector<Entry> entries;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const auto line = trim(content.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty()) continue;
    try {
      const auto obj = json::parse(line);
      Entry e;
      e.role = parse_role(obj.at("role").get<std::string>());
      e.prompt_hash = obj.value("prompt_hash", std::string("*"));
      if (obj.contains("prompt_contains")) {
        e.prompt_contains = obj["prompt_contains"].get<std::string>();
      }
      if (obj.contains("texts")) {
        e.texts = obj["texts"].get<std::vector<std::string>>();
      }
      if (obj.contains("logprobs") && !obj["logprobs"].is_null()) {
        e.logprobs = obj["logprobs"].get<std::vector<std::vector<double>>>();
      }
      if (obj.contains("error")) {
        const auto name = obj["error"].get<std::string>();
        e.error = parse_error_code(name);
        if (!e.error) {
          throw Error(ErrorCode::ConfigError, "unknown error code " + name);
        }
      }
      entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::SchemaError, ex.what(), line_no);
    } catch (const Error& ex) {
      throw Error(ErrorCode::SchemaError, ex.what(), line_no);
    }
  }
  return MockBackend(std::move(entries));
}

MockBackend MockBackend::load(const std::filesystem::path& path) {
  return from_jsonl(read_file(path));
}

const MockBackend::Entry* MockBackend::lookup(Role role,
                                              std::string_view prompt) const {
  const auto hash = stable_hash(prompt);
  for (const auto& e : entries_) {
    if (e.role == role && e.prompt_hash == hash) return &e;
  }
  for (const auto& e : entries_) {
    if (e.role == role && e.prompt_contains &&
        prompt.find(*e.prompt_contains) != std::string_view::npos) {
      return &e;
    }
  }
  for (const auto& e : entries_) {
    if (e.role == role && !e.prompt_contains && e.prompt_hash == "*") {
      return &e;
    }
  }
  return nullptr;
}

CompletionResult MockBackend::complete(const CompletionRequest& request) const {
  const auto* entry = lookup(request.role, request.prompt);
  if (!entry) {
    throw Error(ErrorCode::MalformedResponse,
                "no scripted response for " +
                    std::string(to_string(request.role)) + " prompt " +
                    stable_hash(request.prompt));
  }
  if (entry->error) throw Error(*entry->error, "scripted failure");
  if (entry->texts.empty()) {
    throw Error(ErrorCode::MalformedResponse, "script entry has no texts");
  }

  CompletionResult result;
  result.usage.prompt_tokens = count_words(request.prompt);
  const auto n = request.sampling.n_samples;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& text = entry->texts[i % entry->texts.size()];
    result.texts.push_back(text);
    result.usage.completion_tokens += count_words(text);
  }
  if (request.want_logprobs) {
    if (!entry->logprobs) {
      throw Error(ErrorCode::LogprobsUnsupported,
                  "script entry carries no logprobs");
    }
    std::vector<LogprobSequence> traces;
    for (std::size_t i = 0; i < n; ++i) {
      LogprobSequence seq;
      for (double lp : (*entry->logprobs)[i % entry->logprobs->size()]) {
        seq.push_back({"", lp});
      }
      traces.push_back(std::move(seq));
    }
    result.logprob_traces = std::move(traces);
  }
  return result;
}

LogprobSequence MockBackend::score(std::string_view prompt,
                                   std::string_view completion,
                                   Role role) const {
  if (completion.empty()) return {};
  const auto* entry = lookup(role, prompt);
  if (!entry || !entry->logprobs) {
    throw Error(ErrorCode::LogprobsUnsupported,
                "no scripted scoring trace for " +
                    std::string(to_string(role)));
  }
  if (entry->error) throw Error(*entry->error, "scripted failure");
  for (std::size_t i = 0; i < entry->texts.size(); ++i) {
    if (entry->texts[i] == completion) {
      LogprobSequence seq;
      for (double lp : (*entry->logprobs)[i]) seq.push_back({"", lp});
      return seq;
    }
  }
  throw Error(ErrorCode::MalformedResponse,
              "completion is not among the scripted texts");
}

// ---------------------------------------------------------------------------
// HttpBackend

namespace {

std::string api_key_for(const EndpointConfig& config, Role role) {
  std::string var = config.api_key_env;
  if (var.empty()) {
    var = "RPO_API_KEY_";
    for (char c : role_key(role)) var.push_back(static_cast<char>(c - 32));
  }
  const char* value = std::getenv(var.c_str());
  return value ? value : "";
}

std::chrono::milliseconds backoff_delay(int initial_ms, int attempt) {
  thread_local std::mt19937 jitter_rng{std::random_device{}()};
  const double base = initial_ms * std::pow(2.0, attempt);
  std::uniform_real_distribution<double> half(0.0, base / 2.0);
  return std::chrono::milliseconds(
      static_cast<long long>(base / 2.0 + half(jitter_rng)));
}

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedResponse, e.what());
  }
}

}  // namespace

HttpBackend::HttpBackend(EndpointConfig config, Role role)
    : config_(std::move(config)),
      role_(role),
      api_key_(api_key_for(config_, role)) {
  if (config_.url.empty()) {
    throw Error(ErrorCode::ConfigError,
                "no endpoint url for " + std::string(to_string(role)));
  }
}

std::string HttpBackend::post_with_retry(const std::string& path,
                                         const std::string& body) const {
  for (int attempt = 0;; ++attempt) {
    const auto resp = detail::http_post_json(config_.url, path, body, api_key_,
                                             config_.timeout_ms);
    if (resp.status >= 200 && resp.status < 300) return resp.body;

    const bool retryable = resp.status == 429 || resp.status >= 500;
    if (retryable && attempt < config_.max_retries) {
      std::this_thread::sleep_for(
          backoff_delay(config_.initial_backoff_ms, attempt));
      continue;
    }
    if (resp.status == 429) {
      throw Error(ErrorCode::RateLimited,
                  "HTTP 429 after " + std::to_string(attempt) + " retries");
    }
    throw Error(ErrorCode::HttpError,
                "HTTP " + std::to_string(resp.status) + ": " +
                    resp.body.substr(0, 200));
  }
}

CompletionResult HttpBackend::complete_once(const CompletionRequest& request,
                                            std::size_t n) const {
  json body = {
      {"model", config_.model},
      {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
      {"temperature", request.sampling.temperature},
      {"top_p", request.sampling.top_p},
      {"n", n},
      {"max_tokens", request.sampling.max_new_tokens},
  };
  if (request.want_logprobs) body["logprobs"] = true;
  if (request.sampling.seed) body["seed"] = *request.sampling.seed;

  const auto started = std::chrono::steady_clock::now();
  const auto reply = parse_body(post_with_retry(config_.chat_path, body.dump()));
  CompletionResult result;
  result.latency_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - started)
                          .count();

  try {
    auto choices = reply.at("choices");
    if (!choices.is_array()) {
      throw Error(ErrorCode::MalformedResponse, "choices is not an array");
    }
    std::vector<json> ordered(choices.begin(), choices.end());
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const json& a, const json& b) {
                       return a.value("index", 0) < b.value("index", 0);
                     });
    std::vector<LogprobSequence> traces;
    bool all_traced = true;
    for (const auto& choice : ordered) {
      const auto& content = choice.at("message").at("content");
      result.texts.push_back(content.is_string() ? content.get<std::string>()
                                                 : std::string());
      if (!request.want_logprobs) continue;
      const auto lp = choice.find("logprobs");
      if (lp == choice.end() || lp->is_null() || !lp->contains("content") ||
          !(*lp)["content"].is_array()) {
        all_traced = false;
        continue;
      }
      LogprobSequence seq;
      for (const auto& tok : (*lp)["content"]) {
        seq.push_back({tok.value("token", std::string()),
                       tok.at("logprob").get<double>()});
      }
      traces.push_back(std::move(seq));
    }
    if (request.want_logprobs) {
      if (!all_traced) {
        throw Error(ErrorCode::LogprobsUnsupported,
                    "endpoint returned no logprobs");
      }
      result.logprob_traces = std::move(traces);
    }
    if (auto usage = reply.find("usage"); usage != reply.end() &&
                                          usage->is_object()) {
      result.usage.prompt_tokens = usage->value("prompt_tokens", 0);
      result.usage.completion_tokens = usage->value("completion_tokens", 0);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedResponse, e.what());
  }
  return result;
}

CompletionResult HttpBackend::complete(const CompletionRequest& request) const {
  if (request.want_logprobs && !config_.supports_logprobs) {
    throw Error(ErrorCode::LogprobsUnsupported,
                "endpoint is not configured for logprobs");
  }
  const auto n = request.sampling.n_samples;
  if (config_.supports_n || n == 1) return complete_once(request, n);

  CompletionResult merged;
  for (std::size_t i = 0; i < n; ++i) {
    auto single = request;
    single.sampling.n_samples = 1;
    if (single.sampling.seed) *single.sampling.seed += i;
    auto part = complete_once(single, 1);
    merged.texts.insert(merged.texts.end(), part.texts.begin(),
                        part.texts.end());
    if (part.logprob_traces) {
      if (!merged.logprob_traces) merged.logprob_traces.emplace();
      merged.logprob_traces->insert(merged.logprob_traces->end(),
                                    part.logprob_traces->begin(),
                                    part.logprob_traces->end());
    }
    merged.usage.prompt_tokens += part.usage.prompt_tokens;
    merged.usage.completion_tokens += part.usage.completion_tokens;
    merged.latency_ms += part.latency_ms;
  }
  return merged;
}

LogprobSequence HttpBackend::score(std::string_view prompt,
                                   std::string_view completion,
                                   Role /*role*/) const {
  if (completion.empty()) return {};
  if (!config_.supports_scoring) {
    throw Error(ErrorCode::LogprobsUnsupported,
                "endpoint is not configured for teacher-forced scoring");
  }
  std::string full(prompt);
  full += completion;
  json body = {{"model", config_.model}, {"prompt", full},
               {"echo", true},           {"max_tokens", 0},
               {"logprobs", 1},          {"temperature", 0.0}};
  const auto reply =
      parse_body(post_with_retry(config_.completions_path, body.dump()));
  LogprobSequence seq;
  try {
    const auto& lp = reply.at("choices").at(0).at("logprobs");
    const auto& tokens = lp.at("tokens");
    const auto& logprobs = lp.at("token_logprobs");
    const auto& offsets = lp.at("text_offset");
    if (tokens.size() != logprobs.size() || tokens.size() != offsets.size()) {
      throw Error(ErrorCode::MalformedResponse, "ragged logprob arrays");
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (offsets[i].get<std::size_t>() < prompt.size()) continue;
      if (logprobs[i].is_null()) {
        throw Error(ErrorCode::MalformedResponse, "null completion logprob");
      }
      seq.push_back({tokens[i].get<std::string>(), logprobs[i].get<double>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedResponse, e.what());
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Providers

void Providers::set(Role role, std::shared_ptr<const CompletionBackend> backend) {
  backends_[role] = std::move(backend);
}

void Providers::set_all(std::shared_ptr<const CompletionBackend> backend) {
  for (Role role : kAllRoles) backends_[role] = backend;
}

bool Providers::has(Role role) const { return backends_.count(role) > 0; }

const CompletionBackend& Providers::backend(Role role) const {
  auto it = backends_.find(role);
  if (it == backends_.end() || !it->second) {
    throw Error(ErrorCode::ConfigError,
                "no endpoint configured for " + std::string(to_string(role)));
  }
  return *it->second;
}

CompletionResult Providers::complete(const CompletionRequest& request) const {
  request.sampling.validate();
  if (request.role == Role::BaseModel && request.want_logprobs) {
    throw Error(ErrorCode::LogprobsUnsupported,
                "the base model is a black box; logprobs cannot be requested");
  }
  auto result = backend(request.role).complete(request);
  if (result.texts.size() != request.sampling.n_samples) {
    throw Error(ErrorCode::MalformedResponse,
                "expected " + std::to_string(request.sampling.n_samples) +
                    " samples, got " + std::to_string(result.texts.size()));
  }
  if (!request.want_logprobs) {
    result.logprob_traces.reset();
  } else if (!result.logprob_traces ||
             result.logprob_traces->size() != result.texts.size()) {
    throw Error(ErrorCode::LogprobsUnsupported,
                "logprob traces missing or misaligned");
  }
  return result;
}

std::vector<BatchSlot> Providers::complete_batch(
    std::span<const CompletionRequest> requests,
    std::size_t max_in_flight) const {
  if (max_in_flight < 1) {
    throw Error(ErrorCode::InvalidArgument, "max_in_flight must be >= 1");
  }
  std::vector<BatchSlot> slots(requests.size());
  bounded_parallel_for(requests.size(), max_in_flight, [&](std::size_t i) {
    try {
      slots[i].result = complete(requests[i]);
    } catch (const Error& e) {
      slots[i].error = e;
    } catch (const std::exception& e) {
      slots[i].error = Error(ErrorCode::MalformedResponse, e.what());
    }
  });
  return slots;
}

LogprobSequence Providers::score_logprobs(std::string_view prompt,
                                          std::string_view completion,
                                          Role role) const {
  if (role == Role::BaseModel) {
    throw Error(ErrorCode::LogprobsUnsupported,
                "the base model is a black box; it cannot score completions");
  }
  if (completion.empty()) return {};
  return backend(role).score(prompt, completion, role);
}

// ---------------------------------------------------------------------------
// HttpEmbedder

HttpEmbedder::HttpEmbedder(EndpointConfig config) : config_(std::move(config)) {
  if (config_.url.empty()) {
    throw Error(ErrorCode::ConfigError, "no embedding endpoint url");
  }
}

std::vector<std::vector<double>> HttpEmbedder::embed(
    std::span<const std::string> texts) const {
  json body = {{"input", std::vector<std::string>(texts.begin(), texts.end())}};
  if (!config_.model.empty()) body["model"] = config_.model;
  const char* key =
      config_.api_key_env.empty() ? nullptr : std::getenv(config_.api_key_env.c_str());
  detail::HttpResponse resp;
  try {
    resp = detail::http_post_json(config_.url, "", body.dump(), key ? key : "",
                                  config_.timeout_ms);
  } catch (const Error& e) {
    throw Error(ErrorCode::BackendUnavailable, e.what());
  }
  if (resp.status < 200 || resp.status >= 300) {
    throw Error(ErrorCode::BackendUnavailable,
                "embedding endpoint returned HTTP " + std::to_string(resp.status));
  }
  try {
    return parse_body(resp.body)
        .at("embeddings")
        .get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable, e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::BackendUnavailable, e.what());
  }
}

}  // namespace rpo
