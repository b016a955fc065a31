#include <cmath>
#include <memory>
#include <numeric>

#include "doctest.h"
#include "json.hpp"
#include "rpo/error.h"
#include "rpo/io.h"
#include "rpo/rl.h"
#include "rpo/rng.h"
#include "support.h"

using namespace rpo;
using rpo::testing::entry;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidArgument;
}

RankedContext pool_of(std::size_t n) {
  RankedContext ctx;
  ctx.k = n;
  for (std::size_t i = 0; i < n; ++i) {
    ctx.entries.push_back({entry("e" + std::to_string(i), "text"), 1.0 / (i + 1)});
  }
  return ctx;
}

const std::vector<std::string> kCandidates = {
    "<think>slapstick again</think><personalized>comedy</personalized>",
    "<think>explosions</think><personalized>action</personalized>",
    "<think>pratfalls</think>\n<personalized>Comedy</personalized>",
    "drama-parse-fail"};

Providers scripted(const std::vector<std::string>& candidates, bool uniform = false) {
  std::vector<std::vector<double>> lp = {{-0.1, -0.2}, {-1.0, -0.5}, {-0.3}, {-2.0}};
  std::vector<std::vector<double>> ref = {{-0.2, -0.2}, {-0.8, -0.9}, {-0.3}, {-1.0}};
  if (uniform) {
    lp.assign(candidates.size(), {-0.5, -0.25});
    ref.assign(candidates.size(), {-0.4, -0.5});
  }
  std::vector<MockBackend::Entry> entries;
  entries.push_back({Role::BaseModel, "*", std::nullopt, {"romance"}, std::nullopt, std::nullopt});
  entries.push_back({Role::ReflectionModel, "*", std::nullopt, candidates, lp, std::nullopt});
  entries.push_back({Role::ReferenceModel, "*", std::nullopt, candidates, ref, std::nullopt});
  Providers p;
  p.set_all(std::make_shared<MockBackend>(std::move(entries)));
  return p;
}

RolloutSettings four_way() {
  RolloutSettings s;
  s.advantage.group_size = 4;
  s.seed = 99;
  return s;
}

TaskInstance rich_instance() {
  auto inst = testing::movie("m1", "u1", "A clumsy chef opens a restaurant", "comedy");
  for (int i = 0; i < 5; ++i) {
    inst.profile.push_back(entry("x" + std::to_string(i), "a chef story number " +
                                                              std::to_string(i),
                                 "comedy"));
  }
  return inst;
}

}  // namespace

TEST_CASE("curriculum schedule") {
  CurriculumConfig cfg;
  CHECK(curriculum_k(1, cfg) == 2);
  CHECK(curriculum_k(5, cfg) == 6);
  CHECK(curriculum_k(50, cfg) == 6);
  cfg.e_step = 2;
  CHECK(curriculum_k(3, cfg) == 3);
  CHECK(curriculum_k(2, cfg) == 2);
  CHECK(code_of([&] { curriculum_k(0, cfg); }) == ErrorCode::InvalidArgument);

  CurriculumConfig bad;
  bad.k_min = 7;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = {};
  bad.e_step = 0;
  CHECK_THROWS_AS(bad.validate(), Error);

  CHECK(parse_curriculum_unit("epoch") == CurriculumUnit::Epoch);
  CHECK(parse_curriculum_unit(to_string(CurriculumUnit::Step)) == CurriculumUnit::Step);
}

TEST_CASE("ramp sizing finishes the schedule by the last step") {
  CurriculumConfig cfg;
  for (std::size_t total : {1u, 2u, 5u, 9u, 100u, 1000u}) {
    cfg.e_step = e_step_for_ramp(total, cfg);
    CHECK(cfg.e_step >= 1);
    CHECK(curriculum_k(1, cfg) == 2);
    if (total >= 5) CHECK(curriculum_k(total, cfg) == 6);
  }
}

TEST_CASE("shot sampling") {
  const auto top2 = sample_shots(pool_of(6), 2, 1);
  REQUIRE(top2.size() == 2);
  CHECK(top2[0].entry_id == "e0");
  CHECK(top2[1].entry_id == "e1");
  CHECK(sample_shots(pool_of(3), 6, 1).size() == 3);
  CHECK(code_of([] { sample_shots(RankedContext{}, 2, 1); }) == ErrorCode::EmptyPool);
  CHECK(code_of([] { sample_shots(pool_of(3), 0, 1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("group-mean advantages") {
  AdvantageConfig cfg;
  cfg.group_size = 4;
  const auto a = advantages(std::vector<double>{0.8, 0.2, 0.5, 0.5}, cfg);
  CHECK(a[0] == doctest::Approx(0.3));
  CHECK(a[1] == doctest::Approx(-0.3));
  CHECK(a[2] == doctest::Approx(0.0));
  CHECK(a[3] == doctest::Approx(0.0));
  CHECK(advantages(std::vector<double>{0.4, 0.4, 0.4, 0.4}, cfg) ==
        std::vector<double>{0.0, 0.0, 0.0, 0.0});
  CHECK(code_of([&] { advantages(std::vector<double>{1.0, 0.0}, cfg); }) ==
        ErrorCode::GroupSizeMismatch);
}

TEST_CASE("batch whitening") {
  std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
  whiten_advantages(v, 1e-8);
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / 4;
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  CHECK(std::abs(mean) < 1e-12);
  CHECK(var / 4 == doctest::Approx(1.0).epsilon(1e-6));
  std::vector<double> flat = {0.5, 0.5};
  whiten_advantages(flat, 1e-8);
  CHECK(flat == std::vector<double>{0.0, 0.0});
}

TEST_CASE("sft nll") {
  const auto r = sft_nll(std::vector<double>{-0.1, -0.2, -0.3});
  CHECK(r.total_nll == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(r.T == 3);
  CHECK(r.per_token == std::vector<double>{-0.1, -0.2, -0.3});
  const auto zero = sft_nll(std::vector<double>{0.0});
  CHECK(zero.total_nll == 0.0);
  CHECK_FALSE(std::signbit(zero.total_nll));
  CHECK(code_of([] { sft_nll(std::vector<double>{}); }) == ErrorCode::EmptySequence);
  CHECK(code_of([] { sft_nll(std::vector<double>{-0.1, 0.2}); }) ==
        ErrorCode::PositiveLogprob);
}

TEST_CASE("rollouts on the worked four-candidate example") {
  const auto providers = scripted(kCandidates);
  const auto records = build_rollouts(rich_instance(), 1, four_way(), providers);
  REQUIRE(records.size() == 4);
  const double expected_reward[] = {1, 0, 1, 0};
  const double expected_adv[] = {0.5, -0.5, 0.5, -0.5};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(records[i].shaped.task_reward == expected_reward[i]);
    CHECK(records[i].advantage == doctest::Approx(expected_adv[i]).epsilon(1e-15));
    CHECK(records[i].k == 2);
    CHECK(records[i].shots_used == 2);
    CHECK(records[i].group_id == "m1#1");
    CHECK(records[i].seed == 99);
    CHECK(records[i].candidate == kCandidates[i]);
    CHECK(records[i].kl.size() == records[i].trace.steps.size());
  }
  CHECK(records[3].error.has_value());
  CHECK_FALSE(records[0].error.has_value());
  CHECK(records[0].prompt.find("Initial response: romance") != std::string::npos);
  CHECK(records[1].trace.steps[1].ref_logprob == -0.9);

  const double sum = records[0].shaped.per_token[0] + records[0].shaped.per_token[1];
  CHECK(sum == doctest::Approx(1.0 - 0.01 * (records[0].kl[0] + records[0].kl[1])));
}

TEST_CASE("rollouts clamp k and are reproducible") {
  const auto providers = scripted(kCandidates);
  const auto a = build_rollouts(rich_instance(), 40, four_way(), providers);
  const auto b = build_rollouts(rich_instance(), 40, four_way(), providers);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].k == 6);
    CHECK(a[i].shots_used == 6);
    CHECK(rollout_record_json(a[i]) == rollout_record_json(b[i]));
  }
}

TEST_CASE("identical correct candidates have zero advantage") {
  const std::vector<std::string> same(
      4, "<think>same</think><personalized>comedy</personalized>");
  const auto records = build_rollouts(rich_instance(), 1, four_way(), scripted(same, true));
  for (const auto& r : records) {
    CHECK(r.shaped.task_reward == 1.0);
    CHECK(r.advantage == 0.0);
  }
}

TEST_CASE("reference failures keep the candidate in the group") {
  std::vector<MockBackend::Entry> entries;
  entries.push_back({Role::BaseModel, "*", std::nullopt, {"romance"}, std::nullopt, std::nullopt});
  entries.push_back({Role::ReflectionModel, "*", std::nullopt, kCandidates,
                     std::vector<std::vector<double>>{{-0.1}, {-0.2}, {-0.3}, {-0.4}},
                     std::nullopt});
  entries.push_back({Role::ReferenceModel, "*", std::nullopt, {"x"}, std::nullopt,
                     ErrorCode::Timeout});
  Providers p;
  p.set_all(std::make_shared<MockBackend>(std::move(entries)));
  const auto records = build_rollouts(rich_instance(), 1, four_way(), p);
  REQUIRE(records.size() == 4);
  for (const auto& r : records) {
    CHECK(r.shaped.task_reward == 0.0);
    CHECK(r.advantage == 0.0);
    CHECK(r.error.has_value());
    CHECK(r.trace.steps.size() == 1);
  }
}

TEST_CASE("rollout export and trainer sidecar") {
  auto records = build_rollouts(rich_instance(), 1, four_way(), scripted(kCandidates));
  whiten_batch(records, 1e-8);
  for (const auto& r : records) CHECK(r.whitened);
  const auto dir = testing::fresh_dir("rollouts");
  CHECK(export_rollouts(dir / "r.jsonl", records) == 4);
  const auto lines = read_lines(dir / "r.jsonl");
  REQUIRE(lines.size() == 4);
  const auto first = nlohmann::json::parse(lines[0]);
  for (const char* key : {"instance_id", "prompt", "k", "candidate", "policy_logprobs",
                          "ref_logprobs", "kl", "per_token_rewards", "task_reward",
                          "advantage", "group_id", "seed"}) {
    CHECK_MESSAGE(first.contains(key), key);
  }
  const auto trainer = nlohmann::json::parse(trainer_config_json(four_way()));
  CHECK(trainer["actor_lr"].get<double>() == 5e-7);
  CHECK(trainer["critic_lr"].get<double>() == 9e-6);
  CHECK(trainer["beta"].get<double>() == 0.01);
  CHECK(trainer["group_size"].get<int>() == 4);
}
