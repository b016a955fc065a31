#include "rpo/rl.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "rpo/error.h"
#include "rpo/io.h"
#include "rpo/parallel.h"
#include "rpo/text.h"

namespace rpo {

using json = nlohmann::ordered_json;

std::string_view to_string(CurriculumUnit unit) {
  return unit == CurriculumUnit::Epoch ? "epoch" : "step";
}

CurriculumUnit parse_curriculum_unit(std::string_view name) {
  const auto key = to_lower(name);
  if (key == "epoch") return CurriculumUnit::Epoch;
  if (key == "step") return CurriculumUnit::Step;
  throw Error(ErrorCode::InvalidArgument,
              "unknown curriculum unit \"" + std::string(name) + "\"");
}

void CurriculumConfig::validate() const {
  if (k_min > k_max) {
    throw Error(ErrorCode::InvalidArgument, "k_min must not exceed k_max");
  }
  if (k_min < 1) throw Error(ErrorCode::InvalidArgument, "k_min must be >= 1");
  if (e_step < 1) throw Error(ErrorCode::InvalidArgument, "e_step must be >= 1");
}

std::size_t curriculum_k(std::size_t e, const CurriculumConfig& cfg) {
  cfg.validate();
  if (e < 1) throw Error(ErrorCode::InvalidArgument, "e must be >= 1");
  return std::min(cfg.k_max, cfg.k_min + (e - 1) / cfg.e_step);
}

std::size_t e_step_for_ramp(std::size_t total_steps,
                            const CurriculumConfig& cfg) {
  cfg.validate();
  const auto span = cfg.k_max - cfg.k_min;
  if (span == 0 || total_steps <= 1) return 1;
  return std::max<std::size_t>(1, (total_steps - 1) / span);
}

std::vector<ProfileEntry> sample_shots(const RankedContext& pool,
                                       std::size_t k, std::uint64_t /*seed*/) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (pool.empty()) throw Error(ErrorCode::EmptyPool, "no ranked entries");
  std::vector<ProfileEntry> shots;
  const auto take = std::min(k, pool.size());
  shots.reserve(take);
  for (std::size_t i = 0; i < take; ++i) shots.push_back(pool.entries[i].entry);
  return shots;
}

std::vector<double> advantages(std::span<const double> group_rewards,
                               const AdvantageConfig& cfg) {
  if (group_rewards.size() != cfg.group_size) {
    throw Error(ErrorCode::GroupSizeMismatch,
                "group has " + std::to_string(group_rewards.size()) +
                    " rewards, expected " + std::to_string(cfg.group_size));
  }
  if (group_rewards.empty()) return {};
  const double mean =
      std::accumulate(group_rewards.begin(), group_rewards.end(), 0.0) /
      static_cast<double>(group_rewards.size());
  std::vector<double> out;
  out.reserve(group_rewards.size());
  for (double r : group_rewards) out.push_back(r - mean);
  return out;
}

void whiten_advantages(std::span<double> values, double epsilon) {
  if (values.empty()) return;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double std_dev = std::sqrt(var / n);
  for (double& v : values) v = (v - mean) / (std_dev + epsilon);
}

SftNllResult sft_nll(std::span<const double> target_token_logprobs) {
  if (target_token_logprobs.empty()) {
    throw Error(ErrorCode::EmptySequence, "no target tokens");
  }
  SftNllResult out;
  out.per_token.assign(target_token_logprobs.begin(),
                       target_token_logprobs.end());
  out.T = out.per_token.size();
  double sum = 0.0;
  for (std::size_t t = 0; t < out.T; ++t) {
    if (out.per_token[t] > 0.0) {
      throw Error(ErrorCode::PositiveLogprob,
                  "log-prob at token " + std::to_string(t + 1) + " is positive");
    }
    sum += out.per_token[t];
  }
  out.total_nll = 0.0 - sum;
  return out;
}

namespace {

struct CandidateOutcome {
  LogprobTrace trace;
  std::vector<double> kl;
  double reward = 0.0;
  std::optional<std::string> error;
};

CandidateOutcome score_candidate(const TaskInstance& instance,
                                 const std::string& prompt,
                                 const std::string& text,
                                 const LogprobSequence& policy,
                                 const RolloutSettings& settings,
                                 const Providers& providers) {
  CandidateOutcome out;
  std::vector<std::string> tokens;
  std::vector<double> policy_lp;
  for (const auto& tok : policy) {
    tokens.push_back(tok.token);
    policy_lp.push_back(tok.logprob);
  }

  bool trace_ok = false;
  try {
    const auto ref = providers.score_logprobs(prompt, text, Role::ReferenceModel);
    std::vector<double> ref_lp;
    for (const auto& tok : ref) ref_lp.push_back(tok.logprob);
    out.trace = make_trace(tokens, policy_lp, ref_lp);
    trace_ok = true;
  } catch (const Error& e) {
    out.error = e.what();
    // Keep the policy side of the trace; the reference side mirrors it so
    // the exported KL is zero rather than fabricated.
    try {
      out.trace = make_trace(tokens, policy_lp, policy_lp);
    } catch (const Error&) {
      out.trace = {};
    }
  }

  if (trace_ok) {
    try {
      const auto structured = parse_structured(text, settings.parse_options);
      const auto label = parse_label(instance.kind, structured.personalized);
      out.reward =
          task_reward(instance.kind, label, instance.gold, settings.reward_weights);
    } catch (const Error& e) {
      out.error = e.what();
      out.reward = 0.0;
    }
  }

  if (out.trace.empty()) {
    out.kl = {0.0};
  } else {
    out.kl = kl_per_token(out.trace, settings.estimator);
  }
  return out;
}

}  // namespace

std::vector<RolloutRecord> build_rollouts(const TaskInstance& instance,
                                          std::size_t e,
                                          const RolloutSettings& settings,
                                          const Providers& providers) {
  const auto& templates =
      settings.templates ? *settings.templates : TemplateSet::builtin();
  const auto k = curriculum_k(e, settings.curriculum);

  // Initial response from the black-box base model.
  const auto base_prompt = render_base(instance.kind, instance, templates);
  CompletionRequest base_req{base_prompt.text, settings.base_sampling, false,
                             Role::BaseModel};
  base_req.sampling.n_samples = 1;
  const auto base_text =
      std::string(trim(providers.complete(base_req).texts.front()));

  // Curriculum-sized context retrieved with q + A_base.
  const auto query = form_query(instance.query, base_text);
  const auto pool = retrieve_topk(instance.profile, query,
                                  settings.curriculum.k_max, settings.retrieval);
  const auto shots = sample_shots(pool, k, settings.seed);
  RankedContext context;
  context.k = k;
  for (std::size_t i = 0; i < shots.size(); ++i) {
    context.entries.push_back({shots[i], pool.entries[i].score});
  }
  const auto prompt = render_reflection(instance.kind, base_prompt.text,
                                        base_text, context, templates);

  CompletionRequest req{prompt.text, settings.rollout_sampling, true,
                        Role::ReflectionModel};
  req.sampling.n_samples = settings.advantage.group_size;
  if (!req.sampling.seed) req.sampling.seed = settings.seed;
  const auto result = providers.complete(req);

  const auto group = result.texts.size();
  std::vector<CandidateOutcome> outcomes(group);
  bounded_parallel_for(group, settings.max_in_flight, [&](std::size_t i) {
    try {
      outcomes[i] = score_candidate(instance, prompt.text, result.texts[i],
                                    (*result.logprob_traces)[i], settings,
                                    providers);
    } catch (const std::exception& ex) {
      outcomes[i] = CandidateOutcome{{}, {0.0}, 0.0, ex.what()};
    }
  });

  std::vector<double> rewards;
  rewards.reserve(group);
  for (const auto& o : outcomes) rewards.push_back(o.reward);
  const auto adv = advantages(rewards, settings.advantage);

  const auto group_id = instance.instance_id + "#" + std::to_string(e);
  std::vector<RolloutRecord> records;
  records.reserve(group);
  for (std::size_t i = 0; i < group; ++i) {
    RolloutRecord rec;
    rec.instance_id = instance.instance_id;
    rec.group_id = group_id;
    rec.prompt = prompt.text;
    rec.k = k;
    rec.shots_used = prompt.shot_count;
    rec.candidate = result.texts[i];
    rec.trace = std::move(outcomes[i].trace);
    rec.kl = std::move(outcomes[i].kl);
    rec.shaped = shape_rewards(outcomes[i].reward, rec.kl, settings.beta);
    rec.advantage = adv[i];
    rec.seed = *req.sampling.seed;
    rec.error = std::move(outcomes[i].error);
    records.push_back(std::move(rec));
  }
  return records;
}

void whiten_batch(std::span<RolloutRecord> records, double epsilon) {
  std::vector<double> values;
  values.reserve(records.size());
  for (const auto& r : records) values.push_back(r.advantage);
  whiten_advantages(values, epsilon);
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].advantage = values[i];
    records[i].whitened = true;
  }
}

std::string rollout_record_json(const RolloutRecord& record) {
  std::vector<double> policy;
  std::vector<double> ref;
  for (const auto& step : record.trace.steps) {
    policy.push_back(step.policy_logprob);
    ref.push_back(step.ref_logprob);
  }
  json obj;
  obj["instance_id"] = record.instance_id;
  obj["prompt"] = record.prompt;
  obj["k"] = record.k;
  obj["candidate"] = record.candidate;
  obj["policy_logprobs"] = policy;
  obj["ref_logprobs"] = ref;
  obj["kl"] = record.kl;
  obj["per_token_rewards"] = record.shaped.per_token;
  obj["task_reward"] = record.shaped.task_reward;
  obj["advantage"] = record.advantage;
  obj["group_id"] = record.group_id;
  obj["seed"] = record.seed;
  obj["shots_used"] = record.shots_used;
  obj["beta"] = record.shaped.beta;
  obj["group_baseline"] = true;
  obj["whitened"] = record.whitened;
  obj["error"] = record.error ? json(*record.error) : json(nullptr);
  return obj.dump();
}

std::size_t export_rollouts(const std::filesystem::path& path,
                            std::span<const RolloutRecord> records) {
  std::string content;
  for (const auto& r : records) {
    content += rollout_record_json(r);
    content += '\n';
  }
  write_file_atomic(path, content);
  return records.size();
}

std::string trainer_config_json(const RolloutSettings& settings) {
  json obj;
  obj["actor_lr"] = kActorLearningRate;
  obj["critic_lr"] = kCriticLearningRate;
  obj["beta"] = settings.beta;
  obj["group_size"] = settings.advantage.group_size;
  obj["kl_estimator"] = std::string(to_string(settings.estimator));
  obj["whiten_batch"] = settings.advantage.whiten_batch;
  obj["advantage_epsilon"] = settings.advantage.epsilon;
  obj["curriculum"] = {{"k_min", settings.curriculum.k_min},
                       {"k_max", settings.curriculum.k_max},
                       {"e_step", settings.curriculum.e_step},
                       {"unit", std::string(to_string(settings.curriculum.unit))}};
  return obj.dump(2);
}

}  // namespace rpo
