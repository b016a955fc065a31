#include "rpo/trajectory.h"

#include "json.hpp"
#include "rpo/error.h"
#include "rpo/io.h"
#include "rpo/metrics.h"
#include "rpo/parallel.h"
#include "rpo/parser.h"
#include "rpo/text.h"

namespace rpo {

using json = nlohmann::ordered_json;

FilterPolicy FilterPolicy::defaults() {
  FilterPolicy p;
  for (TaskKind kind : kAllTaskKinds) {
    p.consistency[kind] =
        metric_profile(kind) == MetricProfile::Generation
            ? ConsistencyRule{ConsistencyKind::RougeLAtLeast, 0.9}
            : ConsistencyRule{ConsistencyKind::ExactMatch, 1.0};
  }
  return p;
}

ConsistencyRule FilterPolicy::rule_for(TaskKind kind) const {
  auto it = consistency.find(kind);
  if (it != consistency.end()) return it->second;
  return defaults().consistency.at(kind);
}

void FilterPolicy::validate() const {
  for (const auto& [kind, rule] : consistency) {
    if (rule.kind == ConsistencyKind::RougeLAtLeast &&
        !(rule.threshold > 0.0 && rule.threshold <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument,
                  "ROUGE-L threshold must lie in (0, 1]");
    }
  }
}

std::string_view to_string(RejectionCode code) {
  switch (code) {
    case RejectionCode::ParseFailure: return "ParseFailure";
    case RejectionCode::ConsistencyFail: return "ConsistencyFail";
    case RejectionCode::BrevityFail: return "BrevityFail";
    case RejectionCode::EmptyProfile: return "EmptyProfile";
    case RejectionCode::TokenBudget: return "TokenBudget";
    case RejectionCode::ProviderError: return "ProviderError";
  }
  return "";
}

std::string generate_base(const TaskInstance& instance,
                          const Providers& providers,
                          const SamplingConfig& sampling,
                          const TemplateSet& templates) {
  const auto prompt = render_base(instance.kind, instance, templates);
  CompletionRequest req{prompt.text, sampling, false, Role::BaseModel};
  req.sampling.n_samples = 1;
  return std::string(trim(providers.complete(req).texts.front()));
}

std::optional<RejectionCode> check_filters(TaskKind task,
                                           std::string_view think,
                                           std::string_view personalized,
                                           std::string_view gold,
                                           const FilterPolicy& policy) {
  const auto rule = policy.rule_for(task);
  if (rule.kind == ConsistencyKind::ExactMatch) {
    try {
      if (parse_label(task, personalized) != parse_label(task, gold)) {
        return RejectionCode::ConsistencyFail;
      }
    } catch (const Error&) {
      return RejectionCode::ConsistencyFail;
    }
  } else if (rougeL(personalized, gold).f1 < rule.threshold) {
    return RejectionCode::ConsistencyFail;
  }
  if (count_words(think) > policy.brevity_cap_words) {
    return RejectionCode::BrevityFail;
  }
  return std::nullopt;
}

TrajectoryOutcome build_trajectory(const TaskInstance& instance,
                                   const Providers& providers,
                                   const TrajectorySettings& settings) {
  const auto& templates =
      settings.templates ? *settings.templates : TemplateSet::builtin();
  auto reject = [&](RejectionCode code, std::string detail) {
    return TrajectoryOutcome{Rejection{instance.instance_id, code, std::move(detail)}};
  };
  if (instance.profile.empty()) {
    return reject(RejectionCode::EmptyProfile, "profile is empty");
  }

  RenderedPrompt base_prompt;
  try {
    base_prompt = render_base(instance.kind, instance, templates);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::TokenBudgetExceeded) {
      return reject(RejectionCode::TokenBudget, e.what());
    }
    throw;
  }
  const auto base =
      generate_base(instance, providers, settings.base_sampling, templates);
  if (base.empty()) {
    return reject(RejectionCode::ParseFailure, "base model returned nothing");
  }

  const auto ranked = retrieve_topk(instance.profile,
                                    form_query(instance.query, base), 1,
                                    settings.retrieval);
  const auto& p_star = ranked.entries.front().entry;

  RenderedPrompt teacher_prompt;
  try {
    teacher_prompt = render_teacher(instance.kind, base_prompt.text, base,
                                    instance.gold, p_star, templates);
    // The SFT-side prompt (one shot) must fit as well.
    render_reflection(instance.kind, base_prompt.text, base, ranked, templates);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::TokenBudgetExceeded) {
      return reject(RejectionCode::TokenBudget, e.what());
    }
    throw;
  }

  CompletionRequest req{teacher_prompt.text, settings.teacher_sampling, false,
                        Role::TeacherModel};
  req.sampling.n_samples = 1;
  const auto reply = providers.complete(req).texts.front();

  StructuredOutput structured;
  try {
    structured = parse_structured(reply);
  } catch (const Error& e) {
    return reject(RejectionCode::ParseFailure, e.what());
  }

  if (auto failed = check_filters(instance.kind, structured.think,
                                  structured.personalized, instance.gold,
                                  settings.policy)) {
    return reject(*failed, "teacher output failed " +
                               std::string(to_string(*failed)));
  }

  RewriteTrajectory traj;
  traj.instance_id = instance.instance_id;
  traj.task = instance.kind;
  traj.query = base_prompt.text;
  traj.base_response = base;
  traj.p_star = p_star;
  traj.think = std::move(structured.think);
  traj.personalized = std::move(structured.personalized);
  traj.gold = instance.gold;
  traj.filter_flags = {"parsed", "consistent", "brief"};
  return traj;
}

std::vector<TrajectoryOutcome> build_trajectories(
    std::span<const TaskInstance> instances, const Providers& providers,
    const TrajectorySettings& settings, std::size_t max_in_flight) {
  std::vector<TrajectoryOutcome> out(instances.size());
  bounded_parallel_for(instances.size(), max_in_flight, [&](std::size_t i) {
    try {
      out[i] = build_trajectory(instances[i], providers, settings);
    } catch (const std::exception& e) {
      out[i] = Rejection{instances[i].instance_id, RejectionCode::ProviderError,
                         e.what()};
    }
  });
  return out;
}

SftRunReport summarize(std::span<const TrajectoryOutcome> outcomes) {
  SftRunReport report;
  report.attempted = outcomes.size();
  for (const auto& o : outcomes) {
    if (std::holds_alternative<RewriteTrajectory>(o)) {
      ++report.accepted;
    } else {
      ++report.rejections[std::get<Rejection>(o).code];
    }
  }
  return report;
}

std::string sft_report_json(const SftRunReport& report) {
  json rejections = json::object();
  for (const auto& [code, count] : report.rejections) {
    rejections[std::string(to_string(code))] = count;
  }
  json obj;
  obj["attempted"] = report.attempted;
  obj["accepted"] = report.accepted;
  obj["acceptance_rate"] = report.acceptance_rate();
  obj["rejections"] = std::move(rejections);
  return obj.dump(2);
}

std::string sft_record_json(const RewriteTrajectory& t) {
  json obj;
  obj["instance_id"] = t.instance_id;
  obj["query"] = t.query;
  obj["base_response"] = t.base_response;
  obj["p_star_text"] = t.p_star.text;
  obj["p_star_label"] = t.p_star.label ? json(*t.p_star.label) : json(nullptr);
  obj["think"] = t.think;
  obj["personalized"] = t.personalized;
  obj["gold"] = t.gold;
  obj["task"] = std::string(to_string(t.task));
  return obj.dump();
}

RewriteTrajectory parse_sft_record(std::string_view line) {
  try {
    const auto obj = json::parse(line);
    RewriteTrajectory t;
    t.instance_id = obj.at("instance_id").get<std::string>();
    t.query = obj.at("query").get<std::string>();
    t.base_response = obj.at("base_response").get<std::string>();
    t.p_star.text = obj.at("p_star_text").get<std::string>();
    if (!obj.at("p_star_label").is_null()) {
      t.p_star.label = obj["p_star_label"].get<std::string>();
    }
    t.think = obj.at("think").get<std::string>();
    t.personalized = obj.at("personalized").get<std::string>();
    t.gold = obj.at("gold").get<std::string>();
    t.task = parse_task_kind(obj.at("task").get<std::string>());
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, e.what());
  }
}

std::size_t export_sft(const std::filesystem::path& path,
                       std::span<const RewriteTrajectory> trajectories) {
  std::string content;
  for (const auto& t : trajectories) {
    content += sft_record_json(t);
    content += '\n';
  }
  write_file_atomic(path, content);
  return trajectories.size();
}

std::vector<RewriteTrajectory> load_sft(const std::filesystem::path& path) {
  std::vector<RewriteTrajectory> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    try {
      out.push_back(parse_sft_record(lines[i]));
    } catch (const Error& e) {
      throw Error(ErrorCode::SchemaError, e.what(), i + 1);
    }
  }
  return out;
}

}  // namespace rpo
