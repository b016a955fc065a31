#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rpo/config.h"
#include "rpo/dataset.h"
#include "rpo/error.h"
#include "rpo/io.h"
#include "rpo/pipeline.h"
#include "rpo/rl.h"
#include "rpo/trajectory.h"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::vector<rpo::TaskInstance> select_split(const rpo::RunConfig& cfg,
                                            const std::string& which) {
  if (cfg.paths.dataset.empty()) {
    throw rpo::Error(rpo::ErrorCode::ConfigError, "config has no paths.dataset");
  }
  auto all = rpo::load_dataset(cfg.paths.dataset, cfg.task);
  if (which == "all") return all;
  auto split = cfg.split.mode == rpo::SplitMode::UserSplit
                   ? rpo::split_users(all, cfg.split.n_train_users,
                                      cfg.split.n_test_users, cfg.seed)
                   : rpo::split_time(all, cfg.split.test_fraction);
  if (which == "train") return std::move(split.train);
  if (which == "test") return std::move(split.test);
  throw rpo::Error(rpo::ErrorCode::InvalidArgument,
                   "split must be train, test or all, got '" + which + "'");
}

int cmd_ingest(const std::string& path, const std::string& task,
               const std::string& out) {
  const auto kind = rpo::parse_task_kind(task);
  const auto instances = rpo::load_dataset(path, kind);
  std::set<std::string> users;
  std::size_t entries = 0;
  for (const auto& inst : instances) {
    users.insert(inst.user_id);
    entries += inst.profile.size();
  }
  if (!out.empty()) rpo::save_dataset(out, instances);
  json summary;
  summary["task"] = std::string(rpo::to_string(kind));
  summary["instances"] = instances.size();
  summary["users"] = users.size();
  summary["profile_entries"] = entries;
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_build_sft(const std::string& config_path, const std::string& split) {
  const auto cfg = rpo::load_run_config(config_path);
  const auto instances = select_split(cfg, split);
  const auto providers = rpo::make_providers(cfg);
  const auto templates = rpo::load_templates(cfg);
  const auto outcomes = rpo::build_trajectories(
      instances, providers, cfg.trajectory_settings(&templates),
      cfg.max_in_flight);
  std::vector<rpo::RewriteTrajectory> accepted;
  for (const auto& o : outcomes) {
    if (const auto* t = std::get_if<rpo::RewriteTrajectory>(&o)) {
      accepted.push_back(*t);
    } else {
      const auto& r = std::get<rpo::Rejection>(o);
      std::cerr << "rejected " << r.instance_id << ": " << rpo::to_string(r.code)
                << " (" << r.detail << ")\n";
    }
  }
  const auto written = rpo::export_sft(cfg.paths.sft_out, accepted);
  const auto report = rpo::summarize(outcomes);
  std::cout << rpo::sft_report_json(report) << '\n';
  std::fprintf(stdout, "wrote %zu records to %s\n", written,
               cfg.paths.sft_out.string().c_str());
  return 0;
}

int cmd_rollout(const std::string& config_path, std::size_t e,
                const std::string& out, const std::string& split) {
  const auto cfg = rpo::load_run_config(config_path);
  const auto instances = select_split(cfg, split);
  const auto providers = rpo::make_providers(cfg);
  const auto templates = rpo::load_templates(cfg);
  const auto settings = cfg.rollout_settings(&templates);
  std::vector<rpo::RolloutRecord> records;
  for (const auto& inst : instances) {
    auto group = rpo::build_rollouts(inst, e, settings, providers);
    records.insert(records.end(), std::make_move_iterator(group.begin()),
                   std::make_move_iterator(group.end()));
  }
  if (settings.advantage.whiten_batch) {
    rpo::whiten_batch(records, settings.advantage.epsilon);
  }
  const auto written = rpo::export_rollouts(out, records);
  fs::path sidecar(out);
  sidecar.replace_extension(".trainer.json");
  rpo::write_file_atomic(sidecar, rpo::trainer_config_json(settings) + "\n");
  std::fprintf(stdout, "k=%zu, wrote %zu records to %s, trainer config %s\n",
               rpo::curriculum_k(e, settings.curriculum), written, out.c_str(),
               sidecar.string().c_str());
  return 0;
}

int cmd_infer(const std::string& config_path, const std::string& instance_id) {
  const auto cfg = rpo::load_run_config(config_path);
  const auto instances = select_split(cfg, "all");
  const auto providers = rpo::make_providers(cfg);
  const auto templates = rpo::load_templates(cfg);
  for (const auto& inst : instances) {
    if (inst.instance_id != instance_id) continue;
    const auto result = rpo::rpo_infer(inst, cfg, providers,
                                       cfg.retrieval_backend(), templates);
    std::cout << json::parse(rpo::personalized_result_json(result)).dump(2)
              << '\n';
    return 0;
  }
  throw rpo::Error(rpo::ErrorCode::NotFound,
                   "no instance '" + instance_id + "' in " +
                       cfg.paths.dataset.string());
}

int cmd_eval(const std::string& config_path, const std::string& split,
             const std::string& out) {
  const auto cfg = rpo::load_run_config(config_path);
  const auto instances = select_split(cfg, split);
  const auto providers = rpo::make_providers(cfg);
  const auto templates = rpo::load_templates(cfg);
  const auto report = rpo::run_eval(instances, cfg, providers, templates);
  if (!out.empty()) {
    rpo::write_file_atomic(out, rpo::eval_report_json(report) + "\n");
  }
  std::cout << rpo::eval_report_table(report);
  return 0;
}

int cmd_compare(const std::vector<std::string>& config_paths,
                const std::string& split, const std::string& out) {
  std::vector<rpo::RunConfig> configs;
  for (const auto& p : config_paths) configs.push_back(rpo::load_run_config(p));
  if (configs.size() < 2) {
    throw rpo::Error(rpo::ErrorCode::InvalidArgument,
                     "compare needs at least two configs");
  }
  const auto instances = select_split(configs.front(), split);
  const auto report = rpo::compare_modes(instances, configs);
  if (!out.empty()) {
    rpo::write_file_atomic(out, rpo::compare_report_json(report) + "\n");
  }
  std::cout << rpo::compare_report_table(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reflective personalization pipeline over black-box LLM endpoints"};
  app.require_subcommand(1);

  std::string path, task, out, config, split = "train", instance_id;
  std::size_t e = 1;
  std::vector<std::string> configs;

  auto* ingest = app.add_subcommand("ingest", "Validate a JSONL dataset");
  ingest->add_option("--path", path, "Dataset JSONL")->required();
  ingest->add_option("--task", task, "Task kind")->required();
  ingest->add_option("--out", out, "Write the normalized dataset here");

  auto* build_sft = app.add_subcommand("build-sft", "Build the SFT corpus");
  build_sft->add_option("--config", config, "Run config JSON")->required();
  build_sft->add_option("--split", split, "train, test or all")
      ->capture_default_str();

  auto* rollout = app.add_subcommand("rollout", "Export RL rollout records");
  rollout->add_option("--config", config, "Run config JSON")->required();
  rollout->add_option("--epoch-or-step", e, "Curriculum position (>= 1)")
      ->required()
      ->check(CLI::PositiveNumber);
  rollout->add_option("--out", out, "Rollout JSONL")->required();
  rollout->add_option("--split", split, "train, test or all")
      ->capture_default_str();

  auto* infer = app.add_subcommand("infer", "Run one instance");
  infer->add_option("--config", config, "Run config JSON")->required();
  infer->add_option("--instance-id", instance_id, "Instance id")->required();

  std::string eval_split = "test";
  auto* eval = app.add_subcommand("eval", "Evaluate a split");
  eval->add_option("--config", config, "Run config JSON")->required();
  eval->add_option("--split", eval_split, "train, test or all")
      ->capture_default_str();
  eval->add_option("--out", out, "Report JSON");

  auto* compare = app.add_subcommand("compare", "Compare run configs");
  compare->add_option("--configs", configs, "Two or more run configs")
      ->required()
      ->expected(2, -1);
  compare->add_option("--split", eval_split, "train, test or all")
      ->capture_default_str();
  compare->add_option("--out", out, "Report JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return cmd_ingest(path, task, out);
    if (*build_sft) return cmd_build_sft(config, split);
    if (*rollout) return cmd_rollout(config, e, out, split);
    if (*infer) return cmd_infer(config, instance_id);
    if (*eval) return cmd_eval(config, eval_split, out);
    if (*compare) return cmd_compare(configs, eval_split, out);
  } catch (const rpo::Error& err) {
    std::cerr << "rpo: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "rpo: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
