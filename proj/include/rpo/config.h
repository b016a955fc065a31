#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "rpo/dataset.h"
#include "rpo/metrics.h"
#include "rpo/prompt.h"
#include "rpo/provider.h"
#include "rpo/retrieval.h"
#include "rpo/rl.h"
#include "rpo/trajectory.h"

namespace rpo {

enum class RunMode { RPO, ZeroShot, ICL, RAG };

std::string_view to_string(RunMode mode);
RunMode parse_run_mode(std::string_view name);

enum class RetrievalKind { Lexical, Embedding, Random };

std::string_view to_string(RetrievalKind kind);
RetrievalKind parse_retrieval_kind(std::string_view name);

struct RetrievalConfig {
  RetrievalKind backend = RetrievalKind::Lexical;
  std::uint64_t seed = 0;
  std::optional<EndpointConfig> endpoint;  // Embedding only
};

struct SplitConfig {
  SplitMode mode = SplitMode::UserSplit;
  std::size_t n_train_users = 100;
  std::size_t n_test_users = 50;
  double test_fraction = kDefaultTestFraction;
};

struct PathsConfig {
  std::filesystem::path dataset;
  std::filesystem::path template_dir;  // empty: built-in templates
  std::filesystem::path mock_script;   // non-empty: every role is mocked
  std::filesystem::path sft_out = "sft.jsonl";
};

// Mirrors the JSON config document; relative paths are resolved against the
// directory of the config file by load_run_config.
struct RunConfig {
  TaskKind task = TaskKind::MovieTagging;
  RunMode mode = RunMode::RPO;
  RetrievalConfig retrieval;
  std::size_t k = 4;
  std::map<Role, SamplingConfig> sampling;
  SamplingConfig rollout_sampling = SamplingConfig::rollout();
  double beta = kDefaultBeta;
  KlEstimator kl_estimator = KlEstimator::K3;
  CurriculumConfig curriculum;
  std::optional<std::size_t> total_steps;
  AdvantageConfig advantage;
  RewardWeights reward_weights;
  std::map<Role, EndpointConfig> providers;
  SplitConfig split;
  std::uint64_t seed = 0;
  std::size_t max_in_flight = 4;
  bool lenient_parse = false;
  std::size_t brevity_cap_words = 350;
  double rougeL_threshold = 0.9;
  PathsConfig paths;

  // Greedy unless configured. Rollouts use rollout_sampling.
  SamplingConfig sampling_for(Role role) const;
  FilterPolicy filter_policy() const;
  RolloutSettings rollout_settings(const TemplateSet* templates) const;
  TrajectorySettings trajectory_settings(const TemplateSet* templates) const;
  RetrievalBackend retrieval_backend() const;

  // Throws ConfigError on the first missing or inconsistent field.
  void validate() const;
};

RunConfig parse_run_config(std::string_view json_text,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical JSON with every default filled in.
std::string run_config_json(const RunConfig& config);
// stable_hash of run_config_json.
std::string config_hash(const RunConfig& config);

// Mock script when configured, HTTP endpoints otherwise.
Providers make_providers(const RunConfig& config);
TemplateSet load_templates(const RunConfig& config);

}  // namespace rpo
