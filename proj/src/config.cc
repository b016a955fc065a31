#include "rpo/config.h"

#include <algorithm>
#include <memory>
#include <set>

#include "json.hpp"
#include "rpo/error.h"
#include "rpo/io.h"
#include "rpo/text.h"

namespace rpo {

using json = nlohmann::ordered_json;

std::string_view to_string(RunMode mode) {
  switch (mode) {
    case RunMode::RPO: return "RPO";
    case RunMode::ZeroShot: return "ZeroShot";
    case RunMode::ICL: return "ICL";
    case RunMode::RAG: return "RAG";
  }
  return "";
}

RunMode parse_run_mode(std::string_view name) {
  const auto lower = to_lower(name);
  if (lower == "rpo") return RunMode::RPO;
  if (lower == "zeroshot" || lower == "zero_shot" || lower == "zero-shot") {
    return RunMode::ZeroShot;
  }
  if (lower == "icl") return RunMode::ICL;
  if (lower == "rag") return RunMode::RAG;
  throw Error(ErrorCode::ConfigError, "unknown mode '" + std::string(name) + "'");
}

std::string_view to_string(RetrievalKind kind) {
  switch (kind) {
    case RetrievalKind::Lexical: return "lexical";
    case RetrievalKind::Embedding: return "embedding";
    case RetrievalKind::Random: return "random";
  }
  return "";
}

RetrievalKind parse_retrieval_kind(std::string_view name) {
  const auto lower = to_lower(name);
  if (lower == "lexical" || lower == "bm25" || lower == "tfidf") {
    return RetrievalKind::Lexical;
  }
  if (lower == "embedding") return RetrievalKind::Embedding;
  if (lower == "random") return RetrievalKind::Random;
  throw Error(ErrorCode::ConfigError,
              "unknown retrieval backend '" + std::string(name) + "'");
}

namespace {

void check_keys(const json& obj, std::string_view where,
                std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) {
    throw Error(ErrorCode::ConfigError, std::string(where) + " must be an object");
  }
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorCode::ConfigError,
                  "unknown key '" + key + "' in " + std::string(where));
    }
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end() && !it->is_null()) {
    out = it->template get<T>();
  }
}

SamplingConfig parse_sampling(const json& obj, SamplingConfig cfg) {
  check_keys(obj, "sampling",
             {"temperature", "top_p", "n_samples", "max_new_tokens", "seed"});
  read_opt(obj, "temperature", cfg.temperature);
  read_opt(obj, "top_p", cfg.top_p);
  read_opt(obj, "n_samples", cfg.n_samples);
  read_opt(obj, "max_new_tokens", cfg.max_new_tokens);
  if (auto it = obj.find("seed"); it != obj.end() && !it->is_null()) {
    cfg.seed = it->get<std::uint64_t>();
  }
  return cfg;
}

json sampling_json(const SamplingConfig& cfg) {
  json obj;
  obj["temperature"] = cfg.temperature;
  obj["top_p"] = cfg.top_p;
  obj["n_samples"] = cfg.n_samples;
  obj["max_new_tokens"] = cfg.max_new_tokens;
  obj["seed"] = cfg.seed ? json(*cfg.seed) : json(nullptr);
  return obj;
}

EndpointConfig parse_endpoint(const json& obj) {
  check_keys(obj, "endpoint",
             {"url", "model", "timeout_ms", "max_retries", "initial_backoff_ms",
              "chat_path", "completions_path", "api_key_env",
              "supports_logprobs", "supports_scoring", "supports_n"});
  EndpointConfig cfg;
  read_opt(obj, "url", cfg.url);
  read_opt(obj, "model", cfg.model);
  read_opt(obj, "timeout_ms", cfg.timeout_ms);
  read_opt(obj, "max_retries", cfg.max_retries);
  read_opt(obj, "initial_backoff_ms", cfg.initial_backoff_ms);
  read_opt(obj, "chat_path", cfg.chat_path);
  read_opt(obj, "completions_path", cfg.completions_path);
  read_opt(obj, "api_key_env", cfg.api_key_env);
  read_opt(obj, "supports_logprobs", cfg.supports_logprobs);
  read_opt(obj, "supports_scoring", cfg.supports_scoring);
  read_opt(obj, "supports_n", cfg.supports_n);
  return cfg;
}

json endpoint_json(const EndpointConfig& cfg) {
  json obj;
  obj["url"] = cfg.url;
  obj["model"] = cfg.model;
  obj["timeout_ms"] = cfg.timeout_ms;
  obj["max_retries"] = cfg.max_retries;
  obj["initial_backoff_ms"] = cfg.initial_backoff_ms;
  obj["chat_path"] = cfg.chat_path;
  obj["completions_path"] = cfg.completions_path;
  obj["api_key_env"] = cfg.api_key_env;
  obj["supports_logprobs"] = cfg.supports_logprobs;
  obj["supports_scoring"] = cfg.supports_scoring;
  obj["supports_n"] = cfg.supports_n;
  return obj;
}

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& p) {
  std::filesystem::path path(p);
  if (p.empty() || path.is_absolute() || base.empty()) return path;
  return base / path;
}

}  // namespace

SamplingConfig RunConfig::sampling_for(Role role) const {
  auto it = sampling.find(role);
  return it == sampling.end() ? SamplingConfig::greedy() : it->second;
}

FilterPolicy RunConfig::filter_policy() const {
  auto policy = FilterPolicy::defaults();
  policy.brevity_cap_words = brevity_cap_words;
  for (auto& [kind, rule] : policy.consistency) {
    if (rule.kind == ConsistencyKind::RougeLAtLeast) rule.threshold = rougeL_threshold;
  }
  return policy;
}

RetrievalBackend RunConfig::retrieval_backend() const {
  switch (retrieval.backend) {
    case RetrievalKind::Lexical: return LexicalBackend{};
    case RetrievalKind::Random: return RandomBackend{retrieval.seed};
    case RetrievalKind::Embedding:
      if (!retrieval.endpoint) {
        throw Error(ErrorCode::ConfigError,
                    "embedding retrieval needs retrieval.endpoint");
      }
      return EmbeddingBackend{std::make_shared<HttpEmbedder>(*retrieval.endpoint)};
  }
  return LexicalBackend{};
}

RolloutSettings RunConfig::rollout_settings(const TemplateSet* templates) const {
  RolloutSettings s;
  s.curriculum = curriculum;
  if (total_steps) s.curriculum.e_step = e_step_for_ramp(*total_steps, curriculum);
  s.advantage = advantage;
  s.base_sampling = sampling_for(Role::BaseModel);
  s.rollout_sampling = rollout_sampling;
  s.beta = beta;
  s.estimator = kl_estimator;
  s.reward_weights = reward_weights;
  s.parse_options = ParseOptions{lenient_parse, task};
  s.retrieval = retrieval_backend();
  s.seed = seed;
  s.max_in_flight = max_in_flight;
  s.templates = templates;
  return s;
}

TrajectorySettings RunConfig::trajectory_settings(
    const TemplateSet* templates) const {
  TrajectorySettings s;
  s.base_sampling = sampling_for(Role::BaseModel);
  s.teacher_sampling = sampling_for(Role::TeacherModel);
  s.retrieval = retrieval_backend();
  s.policy = filter_policy();
  s.templates = templates;
  return s;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::ConfigError, msg);
  };
  if (k < 1) fail("k must be >= 1");
  if (max_in_flight < 1) fail("max_in_flight must be >= 1");
  if (!(beta >= 0.0)) fail("beta must be >= 0");
  if (advantage.group_size < 1) fail("advantage.group_size must be >= 1");
  if (!(advantage.epsilon > 0.0)) fail("advantage.epsilon must be > 0");
  if (reward_weights.rouge1 < 0.0 || reward_weights.rougeL < 0.0 ||
      reward_weights.rouge1 + reward_weights.rougeL <= 0.0) {
    fail("reward_weights must be non-negative with a positive sum");
  }
  if (!(rougeL_threshold > 0.0 && rougeL_threshold <= 1.0)) {
    fail("rougeL_threshold must lie in (0, 1]");
  }
  if (brevity_cap_words < 1) fail("brevity_cap_words must be >= 1");
  if (total_steps && *total_steps < 1) fail("total_steps must be >= 1");
  try {
    curriculum.validate();
    for (const auto& [role, s] : sampling) s.validate();
    rollout_sampling.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  if (retrieval.backend == RetrievalKind::Embedding && !retrieval.endpoint) {
    fail("embedding retrieval needs retrieval.endpoint");
  }
  if (paths.mock_script.empty()) {
    auto require = [&](Role role) {
      auto it = providers.find(role);
      if (it == providers.end() || it->second.url.empty()) {
        fail(std::string(to_string(mode)) + " mode needs providers." +
             std::string(role_key(role)) + ".url");
      }
    };
    require(Role::BaseModel);
    if (mode == RunMode::RPO) require(Role::ReflectionModel);
  }
}

RunConfig parse_run_config(std::string_view json_text,
                           const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  RunConfig cfg;
  try {
    check_keys(doc, "config",
               {"task", "mode", "retrieval", "k", "sampling", "rollout_sampling",
                "beta", "kl_estimator", "curriculum", "total_steps", "advantage",
                "reward_weights", "providers", "split", "seed", "max_in_flight",
                "lenient_parse", "brevity_cap_words", "rougeL_threshold",
                "paths"});
    if (!doc.contains("task")) throw Error(ErrorCode::ConfigError, "missing task");
    cfg.task = parse_task_kind(doc["task"].get<std::string>());
    if (doc.contains("mode")) cfg.mode = parse_run_mode(doc["mode"].get<std::string>());
    if (doc.contains("retrieval")) {
      const auto& r = doc["retrieval"];
      check_keys(r, "retrieval", {"backend", "seed", "endpoint"});
      if (r.contains("backend")) {
        cfg.retrieval.backend = parse_retrieval_kind(r["backend"].get<std::string>());
      }
      read_opt(r, "seed", cfg.retrieval.seed);
      if (r.contains("endpoint") && !r["endpoint"].is_null()) {
        cfg.retrieval.endpoint = parse_endpoint(r["endpoint"]);
      }
    }
    read_opt(doc, "k", cfg.k);
    if (doc.contains("sampling")) {
      check_keys(doc["sampling"], "sampling",
                 {"base", "reflection", "teacher", "reference"});
      for (const auto& [key, value] : doc["sampling"].items()) {
        cfg.sampling[parse_role(key)] =
            parse_sampling(value, SamplingConfig::greedy());
      }
    }
    if (doc.contains("rollout_sampling")) {
      cfg.rollout_sampling =
          parse_sampling(doc["rollout_sampling"], SamplingConfig::rollout());
    }
    read_opt(doc, "beta", cfg.beta);
    if (doc.contains("kl_estimator")) {
      cfg.kl_estimator = parse_kl_estimator(doc["kl_estimator"].get<std::string>());
    }
    if (doc.contains("curriculum")) {
      const auto& c = doc["curriculum"];
      check_keys(c, "curriculum", {"k_min", "k_max", "e_step", "unit"});
      read_opt(c, "k_min", cfg.curriculum.k_min);
      read_opt(c, "k_max", cfg.curriculum.k_max);
      read_opt(c, "e_step", cfg.curriculum.e_step);
      if (c.contains("unit")) {
        cfg.curriculum.unit = parse_curriculum_unit(c["unit"].get<std::string>());
      }
    }
    if (doc.contains("total_steps") && !doc["total_steps"].is_null()) {
      cfg.total_steps = doc["total_steps"].get<std::size_t>();
    }
    if (doc.contains("advantage")) {
      const auto& a = doc["advantage"];
      check_keys(a, "advantage", {"group_size", "whiten_batch", "epsilon"});
      read_opt(a, "group_size", cfg.advantage.group_size);
      read_opt(a, "whiten_batch", cfg.advantage.whiten_batch);
      read_opt(a, "epsilon", cfg.advantage.epsilon);
    }
    if (doc.contains("reward_weights")) {
      const auto& w = doc["reward_weights"];
      check_keys(w, "reward_weights", {"rouge1", "rougeL"});
      read_opt(w, "rouge1", cfg.reward_weights.rouge1);
      read_opt(w, "rougeL", cfg.reward_weights.rougeL);
    }
    if (doc.contains("providers")) {
      check_keys(doc["providers"], "providers",
                 {"base", "reflection", "teacher", "reference"});
      for (const auto& [key, value] : doc["providers"].items()) {
        cfg.providers[parse_role(key)] = parse_endpoint(value);
      }
    }
    if (doc.contains("split")) {
      const auto& s = doc["split"];
      check_keys(s, "split",
                 {"mode", "n_train_users", "n_test_users", "test_fraction"});
      if (s.contains("mode")) {
        const auto m = to_lower(s["mode"].get<std::string>());
        if (m == "user" || m == "usersplit") {
          cfg.split.mode = SplitMode::UserSplit;
        } else if (m == "time" || m == "timesplit") {
          cfg.split.mode = SplitMode::TimeSplit;
        } else {
          throw Error(ErrorCode::ConfigError, "unknown split mode '" + m + "'");
        }
      }
      read_opt(s, "n_train_users", cfg.split.n_train_users);
      read_opt(s, "n_test_users", cfg.split.n_test_users);
      read_opt(s, "test_fraction", cfg.split.test_fraction);
    }
    read_opt(doc, "seed", cfg.seed);
    read_opt(doc, "max_in_flight", cfg.max_in_flight);
    read_opt(doc, "lenient_parse", cfg.lenient_parse);
    read_opt(doc, "brevity_cap_words", cfg.brevity_cap_words);
    read_opt(doc, "rougeL_threshold", cfg.rougeL_threshold);
    if (doc.contains("paths")) {
      const auto& p = doc["paths"];
      check_keys(p, "paths", {"dataset", "template_dir", "mock_script", "sft_out"});
      if (p.contains("dataset")) cfg.paths.dataset = resolve(base_dir, p["dataset"].get<std::string>());
      if (p.contains("template_dir")) cfg.paths.template_dir = resolve(base_dir, p["template_dir"].get<std::string>());
      if (p.contains("mock_script")) cfg.paths.mock_script = resolve(base_dir, p["mock_script"].get<std::string>());
      if (p.contains("sft_out")) cfg.paths.sft_out = resolve(base_dir, p["sft_out"].get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    throw Error(ErrorCode::ConfigError, e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_file(path), path.parent_path());
}

std::string run_config_json(const RunConfig& c) {
  json obj;
  obj["task"] = std::string(to_string(c.task));
  obj["mode"] = std::string(to_string(c.mode));
  json r;
  r["backend"] = std::string(to_string(c.retrieval.backend));
  r["seed"] = c.retrieval.seed;
  r["endpoint"] = c.retrieval.endpoint ? endpoint_json(*c.retrieval.endpoint)
                                       : json(nullptr);
  obj["retrieval"] = std::move(r);
  obj["k"] = c.k;
  json sampling = json::object();
  for (Role role : kAllRoles) {
    sampling[std::string(role_key(role))] = sampling_json(c.sampling_for(role));
  }
  obj["sampling"] = std::move(sampling);
  obj["rollout_sampling"] = sampling_json(c.rollout_sampling);
  obj["beta"] = c.beta;
  obj["kl_estimator"] = std::string(to_string(c.kl_estimator));
  obj["curriculum"] = {{"k_min", c.curriculum.k_min},
                       {"k_max", c.curriculum.k_max},
                       {"e_step", c.curriculum.e_step},
                       {"unit", std::string(to_string(c.curriculum.unit))}};
  obj["total_steps"] = c.total_steps ? json(*c.total_steps) : json(nullptr);
  obj["advantage"] = {{"group_size", c.advantage.group_size},
                      {"whiten_batch", c.advantage.whiten_batch},
                      {"epsilon", c.advantage.epsilon}};
  obj["reward_weights"] = {{"rouge1", c.reward_weights.rouge1},
                           {"rougeL", c.reward_weights.rougeL}};
  json providers = json::object();
  for (const auto& [role, ep] : c.providers) {
    providers[std::string(role_key(role))] = endpoint_json(ep);
  }
  obj["providers"] = std::move(providers);
  obj["split"] = {
      {"mode", c.split.mode == SplitMode::UserSplit ? "user" : "time"},
      {"n_train_users", c.split.n_train_users},
      {"n_test_users", c.split.n_test_users},
      {"test_fraction", c.split.test_fraction}};
  obj["seed"] = c.seed;
  obj["max_in_flight"] = c.max_in_flight;
  obj["lenient_parse"] = c.lenient_parse;
  obj["brevity_cap_words"] = c.brevity_cap_words;
  obj["rougeL_threshold"] = c.rougeL_threshold;
  obj["paths"] = {{"dataset", c.paths.dataset.generic_string()},
                  {"template_dir", c.paths.template_dir.generic_string()},
                  {"mock_script", c.paths.mock_script.generic_string()},
                  {"sft_out", c.paths.sft_out.generic_string()}};
  return obj.dump(2);
}

std::string config_hash(const RunConfig& config) {
  return stable_hash(run_config_json(config));
}

Providers make_providers(const RunConfig& config) {
  Providers providers;
  if (!config.paths.mock_script.empty()) {
    providers.set_all(
        std::make_shared<MockBackend>(MockBackend::load(config.paths.mock_script)));
    return providers;
  }
  for (const auto& [role, ep] : config.providers) {
    providers.set(role, std::make_shared<HttpBackend>(ep, role));
  }
  return providers;
}

TemplateSet load_templates(const RunConfig& config) {
  if (config.paths.template_dir.empty()) return TemplateSet::builtin();
  return TemplateSet::load(config.paths.template_dir);
}

}  // namespace rpo
