#include "rpo/pipeline.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <tuple>

#include "json.hpp"
#include "rpo/error.h"
#include "rpo/parallel.h"
#include "rpo/text.h"
#include "rpo/trajectory.h"

namespace rpo {

using json = nlohmann::ordered_json;

namespace {

std::optional<ParsedLabel> try_label(TaskKind kind, std::string_view text) {
  try {
    return parse_label(kind, text);
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string complete_one(const Providers& providers, Role role,
                         const std::string& prompt, SamplingConfig sampling) {
  sampling.n_samples = 1;
  CompletionRequest req{prompt, sampling, false, role};
  return providers.complete(req).texts.front();
}

PersonalizedResult direct_answer(const TaskInstance& instance,
                                 const RunConfig& cfg,
                                 const Providers& providers,
                                 const RenderedPrompt& prompt) {
  PersonalizedResult r;
  r.instance_id = instance.instance_id;
  r.mode = cfg.mode;
  r.base_response = std::string(trim(complete_one(
      providers, Role::BaseModel, prompt.text, cfg.sampling_for(Role::BaseModel))));
  r.personalized = r.base_response;
  r.label = try_label(instance.kind, r.personalized);
  r.score = task_reward(instance.kind, r.label, instance.gold, cfg.reward_weights);
  return r;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json metrics_object(const MetricReport& m) {
  return json::parse(metric_report_json(m));
}

// (column, value, lower-is-better)
using MetricColumns = std::vector<std::tuple<std::string, double, bool>>;

MetricColumns metric_columns(
    const MetricReport& m) {
  MetricColumns cols;
  if (m.accuracy) cols.emplace_back("Acc", *m.accuracy, false);
  if (m.macro_f1) cols.emplace_back("F1", *m.macro_f1, false);
  if (m.mae) cols.emplace_back("MAE", *m.mae, true);
  if (m.rmse) cols.emplace_back("RMSE", *m.rmse, true);
  if (m.rouge1) cols.emplace_back("R-1", *m.rouge1, false);
  if (m.rougeL) cols.emplace_back("R-L", *m.rougeL, false);
  return cols;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string signed_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.4f", v);
  return buf;
}

std::string render_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    width.resize(std::max(width.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) {
      width[c] = std::max(width[c], row[c].size());
    }
  }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (c > 0) line += "  ";
      const auto& cell = rows[r][c];
      if (c == 0) {
        line += cell + std::string(width[c] - cell.size(), ' ');
      } else {
        line += std::string(width[c] - cell.size(), ' ') + cell;
      }
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      total += 2 * (width.empty() ? 0 : width.size() - 1);
      out += std::string(total, '-') + '\n';
    }
  }
  return out;
}

}  // namespace

std::string personalized_result_json(const PersonalizedResult& r) {
  json obj;
  obj["instance_id"] = r.instance_id;
  obj["mode"] = std::string(to_string(r.mode));
  obj["base_response"] = r.base_response;
  json ctx = json::array();
  for (const auto& s : r.context) {
    ctx.push_back({{"entry_id", s.entry.entry_id}, {"score", s.score}});
  }
  obj["context"] = std::move(ctx);
  obj["think"] = r.think;
  obj["personalized"] = r.personalized;
  obj["label"] = r.label ? json(label_text(*r.label)) : json(nullptr);
  obj["score"] = r.score;
  obj["fallback_used"] = r.fallback_used;
  obj["degraded_to_zero_shot"] = r.degraded_to_zero_shot;
  obj["error"] = r.error ? json(*r.error) : json(nullptr);
  return obj.dump();
}

PersonalizedResult rpo_infer(const TaskInstance& instance, const RunConfig& cfg,
                             const Providers& providers,
                             const RetrievalBackend& retrieval,
                             const TemplateSet& templates) {
  if (instance.kind != cfg.task) {
    throw Error(ErrorCode::InvalidArgument,
                "instance " + instance.instance_id + " is not a " +
                    std::string(to_string(cfg.task)) + " instance");
  }
  const bool needs_profile = cfg.mode != RunMode::ZeroShot;
  if (cfg.mode == RunMode::ZeroShot ||
      (needs_profile && instance.profile.empty())) {
    auto r = direct_answer(
        instance, cfg, providers,
        render_baseline(BaselineMode::ZeroShot, instance.kind, instance, nullptr,
                        templates));
    r.degraded_to_zero_shot = cfg.mode != RunMode::ZeroShot;
    if (r.personalized.empty()) {
      throw Error(ErrorCode::MalformedResponse, "base model returned nothing");
    }
    return r;
  }

  if (cfg.mode == RunMode::ICL || cfg.mode == RunMode::RAG) {
    RankedContext ctx;
    ctx.k = cfg.k;
    if (cfg.mode == RunMode::ICL) {
      for (std::size_t i = 0; i < instance.profile.size() && i < cfg.k; ++i) {
        ctx.entries.push_back({instance.profile[i], 0.0});
      }
    } else {
      ctx = retrieve_topk(instance.profile, RetrievalQuery{instance.query},
                          cfg.k, retrieval);
    }
    const auto mode =
        cfg.mode == RunMode::ICL ? BaselineMode::ICL : BaselineMode::RAG;
    auto r = direct_answer(
        instance, cfg, providers,
        render_baseline(mode, instance.kind, instance, &ctx, templates));
    r.context = ctx.entries;
    if (r.personalized.empty()) {
      throw Error(ErrorCode::MalformedResponse, "base model returned nothing");
    }
    return r;
  }

  PersonalizedResult r;
  r.instance_id = instance.instance_id;
  r.mode = RunMode::RPO;

  const auto base_prompt = render_base(instance.kind, instance, templates);
  r.base_response = generate_base(instance, providers,
                                  cfg.sampling_for(Role::BaseModel), templates);
  if (r.base_response.empty()) {
    throw Error(ErrorCode::MalformedResponse, "base model returned nothing");
  }

  const auto ranked =
      retrieve_topk(instance.profile, form_query(instance.query, r.base_response),
                    cfg.k, retrieval);
  r.context = ranked.entries;

  const auto prompt = render_reflection(instance.kind, base_prompt.text,
                                        r.base_response, ranked, templates);
  const auto reply = complete_one(providers, Role::ReflectionModel, prompt.text,
                                  cfg.sampling_for(Role::ReflectionModel));

  try {
    auto structured =
        parse_structured(reply, ParseOptions{cfg.lenient_parse, instance.kind});
    r.label = parse_label(instance.kind, structured.personalized);
    r.think = std::move(structured.think);
    r.personalized = std::move(structured.personalized);
  } catch (const Error&) {
    r.fallback_used = true;
    r.think.clear();
    r.personalized = r.base_response;
    r.label = try_label(instance.kind, r.personalized);
  }
  r.score = task_reward(instance.kind, r.label, instance.gold, cfg.reward_weights);
  return r;
}

double EvalReport::fallback_rate() const {
  return results.empty() ? 0.0
                         : static_cast<double>(fallbacks) /
                               static_cast<double>(results.size());
}

double EvalReport::error_rate() const {
  return results.empty() ? 0.0
                         : static_cast<double>(errors) /
                               static_cast<double>(results.size());
}

EvalReport run_eval(std::span<const TaskInstance> dataset, const RunConfig& cfg,
                    const Providers& providers, const TemplateSet& templates) {
  if (dataset.empty()) throw Error(ErrorCode::Empty, "dataset is empty");
  for (const auto& inst : dataset) {
    if (inst.kind != cfg.task) {
      throw Error(ErrorCode::InvalidArgument,
                  "dataset mixes task kinds: " + inst.instance_id + " is " +
                      std::string(to_string(inst.kind)));
    }
  }

  EvalReport report;
  report.mode = cfg.mode;
  report.config_hash = config_hash(cfg);
  report.started_at = utc_now();
  if (!cfg.paths.mock_script.empty()) {
    for (Role role : kAllRoles) report.models[std::string(role_key(role))] = "mock";
  } else {
    for (const auto& [role, ep] : cfg.providers) {
      report.models[std::string(role_key(role))] = ep.model;
    }
  }

  const auto retrieval = cfg.retrieval_backend();
  report.results.resize(dataset.size());
  bounded_parallel_for(dataset.size(), cfg.max_in_flight, [&](std::size_t i) {
    try {
      report.results[i] =
          rpo_infer(dataset[i], cfg, providers, retrieval, templates);
    } catch (const std::exception& e) {
      PersonalizedResult failed;
      failed.instance_id = dataset[i].instance_id;
      failed.mode = cfg.mode;
      failed.error = e.what();
      report.results[i] = std::move(failed);
    }
  });

  MetricReport& m = report.metrics;
  m.task = cfg.task;
  m.n = dataset.size();
  switch (metric_profile(cfg.task)) {
    case MetricProfile::Classification: {
      std::vector<std::optional<std::string>> preds;
      std::vector<std::string> golds;
      for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& lbl = report.results[i].label;
        preds.push_back(lbl ? std::optional(label_text(*lbl)) : std::nullopt);
        golds.push_back(dataset[i].gold);
      }
      const auto tags = movie_tags();
      m.accuracy = accuracy(preds, golds);
      m.macro_f1 = macro_f1(preds, golds, tags);
      break;
    }
    case MetricProfile::Regression: {
      std::vector<std::optional<int>> preds;
      std::vector<int> golds;
      for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& lbl = report.results[i].label;
        preds.push_back(lbl ? std::optional(std::get<Rating>(*lbl).value)
                            : std::nullopt);
        const auto gold = parse_strict_rating(dataset[i].gold);
        if (!gold) {
          throw Error(ErrorCode::LabelError,
                      "gold rating '" + dataset[i].gold + "' is not 1..5");
        }
        golds.push_back(*gold);
      }
      const auto stats = mae_rmse(preds, golds);
      m.mae = stats.mae;
      m.rmse = stats.rmse;
      break;
    }
    case MetricProfile::Generation: {
      double r1 = 0.0, rl = 0.0;
      for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& pred = report.results[i].personalized;
        r1 += rouge1(pred, dataset[i].gold).f1;
        rl += rougeL(pred, dataset[i].gold).f1;
      }
      m.rouge1 = r1 / static_cast<double>(dataset.size());
      m.rougeL = rl / static_cast<double>(dataset.size());
      break;
    }
  }

  for (const auto& r : report.results) {
    if (r.fallback_used) ++report.fallbacks;
    if (r.degraded_to_zero_shot) ++report.degraded;
    if (r.error) ++report.errors;
  }
  report.finished_at = utc_now();
  return report;
}

std::string eval_report_json(const EvalReport& report, bool include_timestamps) {
  json obj;
  obj["metrics"] = metrics_object(report.metrics);
  obj["mode"] = std::string(to_string(report.mode));
  obj["config_hash"] = report.config_hash;
  if (include_timestamps) {
    obj["started_at"] = report.started_at;
    obj["finished_at"] = report.finished_at;
  }
  obj["models"] = report.models;
  obj["n"] = report.results.size();
  obj["fallbacks"] = report.fallbacks;
  obj["parse_failure_rate"] = report.fallback_rate();
  obj["degraded_to_zero_shot"] = report.degraded;
  obj["errors"] = report.errors;
  obj["error_rate"] = report.error_rate();
  json results = json::array();
  for (const auto& r : report.results) {
    results.push_back(json::parse(personalized_result_json(r)));
  }
  obj["results"] = std::move(results);
  return obj.dump(2);
}

std::string eval_report_table(const EvalReport& report) {
  std::vector<std::vector<std::string>> rows(2);
  rows[0] = {"mode", "n"};
  rows[1] = {std::string(to_string(report.mode)),
             std::to_string(report.results.size())};
  for (const auto& [name, value, lower] : metric_columns(report.metrics)) {
    rows[0].push_back(name);
    rows[1].push_back(fixed(value));
  }
  rows[0].insert(rows[0].end(), {"fallback", "errors"});
  rows[1].push_back(fixed(report.fallback_rate()));
  rows[1].push_back(std::to_string(report.errors));
  return render_table(rows);
}

CompareReport compare_modes(std::span<const TaskInstance> dataset,
                            std::span<const RunConfig> configs,
                            const ProviderFactory& make) {
  if (configs.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "compare needs at least two configs");
  }
  CompareReport out;
  out.task = configs.front().task;
  for (const auto& cfg : configs) {
    if (cfg.task != out.task) {
      throw Error(ErrorCode::InvalidArgument, "configs disagree on task");
    }
  }
  for (const auto& cfg : configs) {
    const auto providers = make(cfg);
    const auto templates = load_templates(cfg);
    out.rows.push_back({std::string(to_string(cfg.mode)),
                        run_eval(dataset, cfg, providers, templates)});
  }
  return out;
}

std::string compare_report_json(const CompareReport& report) {
  json rows = json::array();
  const auto base = report.rows.empty()
                        ? MetricColumns{}
                        : metric_columns(report.rows.front().report.metrics);
  for (const auto& row : report.rows) {
    json r;
    r["name"] = row.name;
    r["config_hash"] = row.report.config_hash;
    r["metrics"] = metrics_object(row.report.metrics);
    json deltas = json::object();
    const auto cols = metric_columns(row.report.metrics);
    for (std::size_t c = 0; c < cols.size() && c < base.size(); ++c) {
      deltas[std::get<0>(cols[c])] = std::get<1>(cols[c]) - std::get<1>(base[c]);
    }
    r["delta_vs_first"] = std::move(deltas);
    r["parse_failure_rate"] = row.report.fallback_rate();
    r["error_rate"] = row.report.error_rate();
    rows.push_back(std::move(r));
  }
  json obj;
  obj["task"] = std::string(to_string(report.task));
  obj["rows"] = std::move(rows);
  return obj.dump(2);
}

std::string compare_report_table(const CompareReport& report) {
  if (report.rows.empty()) return {};
  const auto base = metric_columns(report.rows.front().report.metrics);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"mode"};
  for (const auto& col : base) header.push_back(std::get<0>(col));
  for (const auto& col : base) header.push_back("d" + std::get<0>(col));
  rows.push_back(std::move(header));
  for (const auto& row : report.rows) {
    std::vector<std::string> cells = {row.name};
    const auto cols = metric_columns(row.report.metrics);
    for (const auto& col : cols) cells.push_back(fixed(std::get<1>(col)));
    for (std::size_t c = 0; c < cols.size() && c < base.size(); ++c) {
      cells.push_back(signed_fixed(std::get<1>(cols[c]) - std::get<1>(base[c])));
    }
    rows.push_back(std::move(cells));
  }
  return render_table(rows);
}

}  // namespace rpo
