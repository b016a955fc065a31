#include "rpo/metrics.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "json.hpp"
#include "rpo/error.h"
#include "rpo/text.h"

namespace rpo {
namespace {

template <typename P, typename G>
void check_lengths(std::span<P> preds, std::span<G> golds) {
  if (preds.size() != golds.size()) {
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(preds.size()) + " predictions vs " +
                    std::to_string(golds.size()) + " references");
  }
  if (preds.empty()) throw Error(ErrorCode::Empty, "no samples");
}

RougeScore prf(std::size_t overlap, std::size_t cand, std::size_t ref) {
  RougeScore s;
  if (cand == 0 || ref == 0) return s;
  s.precision = static_cast<double>(overlap) / static_cast<double>(cand);
  s.recall = static_cast<double>(overlap) / static_cast<double>(ref);
  if (s.precision + s.recall > 0.0) {
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  }
  return s;
}

}  // namespace

std::string metric_report_json(const MetricReport& report) {
  nlohmann::ordered_json obj;
  obj["task"] = std::string(to_string(report.task));
  obj["n"] = report.n;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) obj[key] = *v;
  };
  put("accuracy", report.accuracy);
  put("macro_f1", report.macro_f1);
  put("mae", report.mae);
  put("rmse", report.rmse);
  put("rouge1", report.rouge1);
  put("rougeL", report.rougeL);
  return obj.dump();
}

double accuracy(std::span<const std::optional<std::string>> preds,
                std::span<const std::string> golds) {
  check_lengths(preds, golds);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] && *preds[i] == golds[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double macro_f1(std::span<const std::optional<std::string>> preds,
                std::span<const std::string> golds,
                std::span<const std::string_view> labels) {
  check_lengths(preds, golds);
  if (labels.empty()) throw Error(ErrorCode::Empty, "empty label set");
  double total = 0.0;
  for (auto label : labels) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const bool predicted = preds[i] && *preds[i] == label;
      const bool actual = golds[i] == label;
      if (predicted && actual) ++tp;
      else if (predicted) ++fp;
      else if (actual) ++fn;
    }
    const double denom = 2.0 * tp + fp + fn;
    total += denom == 0.0 ? 0.0 : 2.0 * tp / denom;
  }
  return total / static_cast<double>(labels.size());
}

ErrorStats mae_rmse(std::span<const std::optional<int>> preds,
                    std::span<const int> golds) {
  check_lengths(preds, golds);
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double diff = preds[i].value_or(kImputedRating) - golds[i];
    abs_sum += std::abs(diff);
    sq_sum += diff * diff;
  }
  const double n = static_cast<double>(preds.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

RougeScore rouge1(std::string_view candidate, std::string_view reference) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  std::unordered_map<std::string, std::size_t> ref_counts;
  for (const auto& t : ref) ++ref_counts[t];
  std::size_t overlap = 0;
  for (const auto& t : cand) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  return prf(overlap, cand.size(), ref.size());
}

std::size_t lcs_length(std::span<const std::string> a,
                       std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rougeL(std::string_view candidate, std::string_view reference) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  return prf(lcs_length(cand, ref), cand.size(), ref.size());
}

double task_reward(TaskKind kind, const std::optional<ParsedLabel>& parsed,
                   std::string_view gold, const RewardWeights& weights) {
  if (!parsed) return 0.0;
  switch (metric_profile(kind)) {
    case MetricProfile::Classification: {
      const auto* tag = std::get_if<Tag>(&*parsed);
      return tag && tag->name == to_lower(trim(gold)) ? 1.0 : 0.0;
    }
    case MetricProfile::Regression: {
      const auto* rating = std::get_if<Rating>(&*parsed);
      const auto gold_rating = parse_strict_rating(gold);
      if (!rating || !gold_rating) return 0.0;
      return 1.0 - std::abs(rating->value - *gold_rating) / 4.0;
    }
    case MetricProfile::Generation: {
      const auto text = label_text(*parsed);
      const double total = weights.rouge1 + weights.rougeL;
      if (total <= 0.0) return 0.0;
      return (weights.rouge1 * rouge1(text, gold).f1 +
              weights.rougeL * rougeL(text, gold).f1) /
             total;
    }
  }
  return 0.0;
}

LogprobTrace make_trace(std::span<const std::string> tokens,
                        std::span<const double> policy,
                        std::span<const double> ref) {
  if (policy.size() != ref.size() ||
      (!tokens.empty() && tokens.size() != policy.size())) {
    throw Error(ErrorCode::InvalidTrace,
                "policy/reference traces have different lengths (" +
                    std::to_string(policy.size()) + " vs " +
                    std::to_string(ref.size()) + ")");
  }
  LogprobTrace trace;
  trace.steps.reserve(policy.size());
  for (std::size_t t = 0; t < policy.size(); ++t) {
    if (policy[t] > 0.0 || ref[t] > 0.0) {
      throw Error(ErrorCode::InvalidTrace,
                  "positive log-prob at step " + std::to_string(t + 1));
    }
    trace.steps.push_back(
        {t + 1, tokens.empty() ? std::string() : tokens[t], policy[t], ref[t]});
  }
  return trace;
}

std::string_view to_string(KlEstimator estimator) {
  return estimator == KlEstimator::K1 ? "k1" : "k3";
}

KlEstimator parse_kl_estimator(std::string_view name) {
  const auto key = to_lower(name);
  if (key == "k1") return KlEstimator::K1;
  if (key == "k3") return KlEstimator::K3;
  throw Error(ErrorCode::InvalidArgument,
              "unknown KL estimator \"" + std::string(name) + "\"");
}

std::vector<double> kl_per_token(const LogprobTrace& trace,
                                 KlEstimator estimator) {
  if (trace.empty()) throw Error(ErrorCode::EmptyTrace, "empty trace");
  std::vector<double> kl;
  kl.reserve(trace.size());
  for (const auto& step : trace.steps) {
    const double log_ratio = step.ref_logprob - step.policy_logprob;
    if (estimator == KlEstimator::K1) {
      kl.push_back(-log_ratio);
    } else {
      // expm1 keeps precision when the ratio is near 1.
      kl.push_back(std::max(0.0, std::expm1(log_ratio) - log_ratio));
    }
  }
  return kl;
}

ShapedReward shape_rewards(double task_reward, std::span<const double> kl,
                           double beta) {
  if (kl.empty()) throw Error(ErrorCode::EmptyTrace, "empty KL sequence");
  if (!(beta >= 0.0)) throw Error(ErrorCode::InvalidArgument, "beta must be >= 0");
  ShapedReward shaped;
  shaped.task_reward = task_reward;
  shaped.beta = beta;
  shaped.per_token.reserve(kl.size());
  for (double k : kl) shaped.per_token.push_back(0.0 - beta * k);
  shaped.per_token.back() += task_reward;
  return shaped;
}

}  // namespace rpo
