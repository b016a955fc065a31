#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rpo/dataset.h"
#include "rpo/prompt.h"
#include "rpo/provider.h"
#include "rpo/retrieval.h"

namespace rpo {

enum class ConsistencyKind { ExactMatch, RougeLAtLeast };

struct ConsistencyRule {
  ConsistencyKind kind = ConsistencyKind::ExactMatch;
  double threshold = 0.9;  // RougeLAtLeast only, in (0, 1]
};

struct FilterPolicy {
  std::map<TaskKind, ConsistencyRule> consistency;
  std::size_t brevity_cap_words = 350;

  // ExactMatch for classification/regression, ROUGE-L F1 >= 0.9 for
  // generation.
  static FilterPolicy defaults();
  ConsistencyRule rule_for(TaskKind kind) const;
  void validate() const;
};

enum class RejectionCode {
  ParseFailure,
  ConsistencyFail,
  BrevityFail,
  EmptyProfile,
  TokenBudget,
  ProviderError,
};

std::string_view to_string(RejectionCode code);

struct Rejection {
  std::string instance_id;
  RejectionCode code = RejectionCode::ParseFailure;
  std::string detail;
};

struct RewriteTrajectory {
  std::string instance_id;
  TaskKind task = TaskKind::MovieTagging;
  std::string query;          // the task prompt as sent to the base model
  std::string base_response;
  ProfileEntry p_star;
  std::string think;
  std::string personalized;
  std::string gold;
  std::vector<std::string> filter_flags;
};

using TrajectoryOutcome = std::variant<RewriteTrajectory, Rejection>;

struct TrajectorySettings {
  SamplingConfig base_sampling = SamplingConfig::greedy();
  SamplingConfig teacher_sampling = SamplingConfig::greedy();
  RetrievalBackend retrieval = LexicalBackend{};
  FilterPolicy policy = FilterPolicy::defaults();
  const TemplateSet* templates = nullptr;
};

// A_base from the base model on the profile-free task prompt.
std::string generate_base(const TaskInstance& instance,
                          const Providers& providers,
                          const SamplingConfig& sampling = SamplingConfig::greedy(),
                          const TemplateSet& templates = TemplateSet::builtin());

// Consistency then brevity; nullopt when the pair passes. Pure.
std::optional<RejectionCode> check_filters(TaskKind task,
                                           std::string_view think,
                                           std::string_view personalized,
                                           std::string_view gold,
                                           const FilterPolicy& policy);

// base -> top-1 retrieval on q + A_base -> teacher prompt -> teacher sample
// -> structured parse -> filters. Provider failures propagate as Error.
TrajectoryOutcome build_trajectory(const TaskInstance& instance,
                                   const Providers& providers,
                                   const TrajectorySettings& settings);

// Runs build_trajectory over `instances` with bounded concurrency; provider
// failures become ProviderError rejections. Output order follows input.
std::vector<TrajectoryOutcome> build_trajectories(
    std::span<const TaskInstance> instances, const Providers& providers,
    const TrajectorySettings& settings, std::size_t max_in_flight);

struct SftRunReport {
  std::size_t attempted = 0;
  std::size_t accepted = 0;
  std::map<RejectionCode, std::size_t> rejections;

  double acceptance_rate() const {
    return attempted == 0 ? 0.0
                          : static_cast<double>(accepted) /
                                static_cast<double>(attempted);
  }
};

SftRunReport summarize(std::span<const TrajectoryOutcome> outcomes);
std::string sft_report_json(const SftRunReport& report);

std::string sft_record_json(const RewriteTrajectory& trajectory);
RewriteTrajectory parse_sft_record(std::string_view line);

// JSONL, replaced atomically. Returns the number of lines written.
std::size_t export_sft(const std::filesystem::path& path,
                       std::span<const RewriteTrajectory> trajectories);
std::vector<RewriteTrajectory> load_sft(const std::filesystem::path& path);

}  // namespace rpo
