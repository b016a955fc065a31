#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rpo/dataset.h"
#include "rpo/parser.h"

namespace rpo {

struct MetricReport {
  TaskKind task = TaskKind::MovieTagging;
  std::optional<double> accuracy;
  std::optional<double> macro_f1;
  std::optional<double> mae;
  std::optional<double> rmse;
  std::optional<double> rouge1;
  std::optional<double> rougeL;
  std::size_t n = 0;
};

// {"task", "n", and the metric pair for the task's profile}, snake_case keys.
std::string metric_report_json(const MetricReport& report);

// Predictions are canonical label strings; nullopt marks a parse failure,
// which never matches.
double accuracy(std::span<const std::optional<std::string>> preds,
                std::span<const std::string> golds);

// Unweighted mean of per-label F1 over `labels`, with 0/0 taken as 0.
double macro_f1(std::span<const std::optional<std::string>> preds,
                std::span<const std::string> golds,
                std::span<const std::string_view> labels);

inline constexpr int kImputedRating = 3;

struct ErrorStats {
  double mae = 0.0;
  double rmse = 0.0;
};

// Missing predictions are imputed as kImputedRating.
ErrorStats mae_rmse(std::span<const std::optional<int>> preds,
                    std::span<const int> golds);

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

RougeScore rouge1(std::string_view candidate, std::string_view reference);
RougeScore rougeL(std::string_view candidate, std::string_view reference);
std::size_t lcs_length(std::span<const std::string> a,
                       std::span<const std::string> b);

struct RewardWeights {
  double rouge1 = 0.5;
  double rougeL = 0.5;
};

// In [0, 1]. A missing label (parse failure) scores 0.
double task_reward(TaskKind kind, const std::optional<ParsedLabel>& parsed,
                   std::string_view gold, const RewardWeights& weights = {});

struct TraceStep {
  std::size_t index = 0;  // 1-based
  std::string token;
  double policy_logprob = 0.0;
  double ref_logprob = 0.0;
};

struct LogprobTrace {
  std::vector<TraceStep> steps;

  std::size_t size() const { return steps.size(); }
  bool empty() const { return steps.empty(); }
};

// Zips aligned policy/reference log-probs into a trace with contiguous
// indices from 1. Throws InvalidTrace on length mismatch or a positive
// log-prob.
LogprobTrace make_trace(std::span<const std::string> tokens,
                        std::span<const double> policy,
                        std::span<const double> ref);

enum class KlEstimator { K1, K3 };

std::string_view to_string(KlEstimator estimator);
KlEstimator parse_kl_estimator(std::string_view name);

// K1: policy - ref. K3: rho - 1 - ln rho with rho = exp(ref - policy).
std::vector<double> kl_per_token(const LogprobTrace& trace,
                                 KlEstimator estimator);

struct ShapedReward {
  std::vector<double> per_token;
  double task_reward = 0.0;
  double beta = 0.0;
};

inline constexpr double kDefaultBeta = 0.01;

// per_token[t] = -beta * kl[t], plus task_reward on the final token.
ShapedReward shape_rewards(double task_reward, std::span<const double> kl,
                           double beta);

}  // namespace rpo
