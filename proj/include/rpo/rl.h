#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rpo/dataset.h"
#include "rpo/metrics.h"
#include "rpo/parser.h"
#include "rpo/prompt.h"
#include "rpo/provider.h"
#include "rpo/retrieval.h"

namespace rpo {

enum class CurriculumUnit { Epoch, Step };

std::string_view to_string(CurriculumUnit unit);
CurriculumUnit parse_curriculum_unit(std::string_view name);

struct CurriculumConfig {
  std::size_t k_min = 2;
  std::size_t k_max = 6;
  std::size_t e_step = 1;
  CurriculumUnit unit = CurriculumUnit::Step;

  void validate() const;
};

// k = min(k_max, k_min + floor((e - 1) / e_step)), e >= 1.
std::size_t curriculum_k(std::size_t e, const CurriculumConfig& cfg);

// Largest e_step for which the k_min -> k_max ramp is complete by step
// `total_steps`.
std::size_t e_step_for_ramp(std::size_t total_steps,
                            const CurriculumConfig& cfg);

// Top-k prefix of the ranked pool (the whole pool when it is smaller). The
// seed is accepted for parity with randomly ranked pools and is not used.
std::vector<ProfileEntry> sample_shots(const RankedContext& pool,
                                       std::size_t k, std::uint64_t seed);

struct AdvantageConfig {
  std::size_t group_size = 16;
  bool whiten_batch = true;
  double epsilon = 1e-8;
};

// Group-mean baseline: a_i = r_i - mean(r). Whitening is a separate,
// batch-level step (whiten_advantages).
std::vector<double> advantages(std::span<const double> group_rewards,
                               const AdvantageConfig& cfg);

// In place: (a - mean) / (std + epsilon) over the whole batch, population std.
void whiten_advantages(std::span<double> values, double epsilon);

struct SftNllResult {
  double total_nll = 0.0;
  std::vector<double> per_token;
  std::size_t T = 0;
};

SftNllResult sft_nll(std::span<const double> target_token_logprobs);

struct RolloutRecord {
  std::string instance_id;
  std::string group_id;
  std::string prompt;
  std::size_t k = 0;           // scheduled shot count
  std::size_t shots_used = 0;  // after token-budget trimming
  std::string candidate;
  LogprobTrace trace;
  std::vector<double> kl;
  ShapedReward shaped;
  double advantage = 0.0;
  std::uint64_t seed = 0;
  bool whitened = false;
  std::optional<std::string> error;
};

struct RolloutSettings {
  CurriculumConfig curriculum;
  AdvantageConfig advantage;
  SamplingConfig base_sampling = SamplingConfig::greedy();
  SamplingConfig rollout_sampling = SamplingConfig::rollout();
  double beta = kDefaultBeta;
  KlEstimator estimator = KlEstimator::K3;
  RewardWeights reward_weights;
  ParseOptions parse_options;
  RetrievalBackend retrieval = LexicalBackend{};
  std::uint64_t seed = 0;
  std::size_t max_in_flight = 4;
  const TemplateSet* templates = nullptr;
};

// One curriculum-sized reflection prompt for `instance` at step/epoch `e`,
// group_size sampled candidates, each parsed, rewarded, KL-shaped and given a
// group-mean advantage. Candidates that fail to parse or score stay in the
// group with task reward 0.
std::vector<RolloutRecord> build_rollouts(const TaskInstance& instance,
                                          std::size_t e,
                                          const RolloutSettings& settings,
                                          const Providers& providers);

// Batch-level whitening of record advantages; marks records as whitened.
void whiten_batch(std::span<RolloutRecord> records, double epsilon);

std::string rollout_record_json(const RolloutRecord& record);
std::size_t export_rollouts(const std::filesystem::path& path,
                            std::span<const RolloutRecord> records);

inline constexpr double kActorLearningRate = 5e-7;
inline constexpr double kCriticLearningRate = 9e-6;

std::string trainer_config_json(const RolloutSettings& settings);

}  // namespace rpo
