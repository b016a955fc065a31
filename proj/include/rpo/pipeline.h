#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rpo/config.h"
#include "rpo/dataset.h"
#include "rpo/metrics.h"
#include "rpo/parser.h"
#include "rpo/prompt.h"
#include "rpo/provider.h"
#include "rpo/retrieval.h"

namespace rpo {

struct PersonalizedResult {
  std::string instance_id;
  RunMode mode = RunMode::RPO;
  std::string base_response;
  std::vector<ScoredEntry> context;
  std::string think;
  std::string personalized;  // A_final
  std::optional<ParsedLabel> label;
  double score = 0.0;  // task reward against gold
  bool fallback_used = false;
  bool degraded_to_zero_shot = false;
  std::optional<std::string> error;
};

std::string personalized_result_json(const PersonalizedResult& result);

// RPO: base answer, retrieval on q + A_base, reflective rewrite. A rewrite
// that does not parse falls back to A_base. Baseline modes return the base
// model's direct answer. An empty profile degrades to ZeroShot.
PersonalizedResult rpo_infer(const TaskInstance& instance, const RunConfig& cfg,
                             const Providers& providers,
                             const RetrievalBackend& retrieval,
                             const TemplateSet& templates = TemplateSet::builtin());

struct EvalReport {
  MetricReport metrics;
  RunMode mode = RunMode::RPO;
  std::string config_hash;
  std::string started_at;
  std::string finished_at;
  std::map<std::string, std::string> models;
  std::size_t fallbacks = 0;
  std::size_t degraded = 0;
  std::size_t errors = 0;
  std::vector<PersonalizedResult> results;

  double fallback_rate() const;
  double error_rate() const;
};

std::string eval_report_json(const EvalReport& report,
                             bool include_timestamps = true);
std::string eval_report_table(const EvalReport& report);

// Instances run concurrently, at most cfg.max_in_flight at a time. A failed
// instance keeps its slot and scores as a miss.
EvalReport run_eval(std::span<const TaskInstance> dataset, const RunConfig& cfg,
                    const Providers& providers,
                    const TemplateSet& templates = TemplateSet::builtin());

struct CompareRow {
  std::string name;
  EvalReport report;
};

struct CompareReport {
  TaskKind task = TaskKind::MovieTagging;
  std::vector<CompareRow> rows;
};

using ProviderFactory = std::function<Providers(const RunConfig&)>;

// One row per config, in order. Needs at least two configs.
CompareReport compare_modes(std::span<const TaskInstance> dataset,
                            std::span<const RunConfig> configs,
                            const ProviderFactory& make = make_providers);

std::string compare_report_json(const CompareReport& report);
// Metric columns for the task plus deltas against the first row.
std::string compare_report_table(const CompareReport& report);

}  // namespace rpo
