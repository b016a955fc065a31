#include <cmath>
#include <optional>

#include "doctest.h"
#include "rpo/error.h"
#include "rpo/metrics.h"
#include "rpo/rng.h"

using namespace rpo;

namespace {

using Preds = std::vector<std::optional<std::string>>;
using Golds = std::vector<std::string>;

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidArgument;
}

LogprobTrace trace(std::vector<std::string> tokens, std::vector<double> policy,
                   std::vector<double> ref) {
  return make_trace(tokens, policy, ref);
}

}  // namespace

TEST_CASE("accuracy") {
  CHECK(accuracy(Preds{"a", "b", "a"}, Golds{"a", "a", "a"}) == doctest::Approx(2.0 / 3));
  CHECK(accuracy(Preds{"a", "b"}, Golds{"a", "b"}) == 1.0);
  CHECK(accuracy(Preds{std::nullopt, "b"}, Golds{"a", "b"}) == 0.5);
  CHECK(code_of([] { accuracy(Preds{"a", "b"}, Golds{"a", "b", "c"}); }) ==
        ErrorCode::LengthMismatch);
  CHECK(code_of([] { accuracy(Preds{}, Golds{}); }) == ErrorCode::Empty);
}

TEST_CASE("macro f1") {
  const std::vector<std::string_view> ab = {"a", "b"};
  CHECK(macro_f1(Preds{"a", "a", "b"}, Golds{"a", "b", "b"}, ab) ==
        doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(macro_f1(Preds{"a", "b"}, Golds{"a", "b"}, ab) == 1.0);
  const std::vector<std::string_view> abc = {"a", "b", "c"};
  CHECK(macro_f1(Preds{"a", "b"}, Golds{"a", "b"}, abc) == doctest::Approx(2.0 / 3));
  CHECK(macro_f1(Preds{std::nullopt, "b"}, Golds{"a", "b"}, ab) == doctest::Approx(0.5));
}

TEST_CASE("mae and rmse") {
  using IP = std::vector<std::optional<int>>;
  using IG = std::vector<int>;
  auto s = mae_rmse(IP{1, 5, 3}, IG{2, 3, 3});
  CHECK(s.mae == 1.0);
  CHECK(s.rmse == doctest::Approx(1.2909944487358056).epsilon(1e-15));
  s = mae_rmse(IP{2, 2}, IG{2, 2});
  CHECK(s.mae == 0.0);
  CHECK(s.rmse == 0.0);
  s = mae_rmse(IP{1}, IG{5});
  CHECK(s.mae == 4.0);
  CHECK(s.rmse == 4.0);
  s = mae_rmse(IP{std::nullopt}, IG{5});
  CHECK(s.mae == 2.0);
  CHECK(code_of([] { mae_rmse(IP{1}, IG{1, 2}); }) == ErrorCode::LengthMismatch);
}

TEST_CASE("rouge worked examples") {
  CHECK(rouge1("the cat sat", "the cat sat").f1 == 1.0);
  CHECK(rouge1("the cat sat", "the cat ran").f1 == doctest::Approx(2.0 / 3));
  CHECK(rouge1("alpha", "beta").f1 == 0.0);
  CHECK(rouge1("", "").f1 == 0.0);
  const auto l = rougeL("the cat sat on mat", "the cat on the mat");
  CHECK(l.precision == doctest::Approx(0.8));
  CHECK(l.recall == doctest::Approx(0.8));
  CHECK(l.f1 == doctest::Approx(0.8));
  CHECK(rougeL("x y z", "x y z").f1 == 1.0);
  CHECK(rougeL("", "x").f1 == 0.0);
  CHECK(rouge1("The, CAT!", "the cat").f1 == 1.0);
  CHECK(rouge1("a a b", "a b b").f1 == doctest::Approx(2.0 / 3));
}

TEST_CASE("rouge symmetry and bounds on fuzzed strings") {
  SeededRng rng(17);
  const char* vocab[] = {"a", "b", "c", "d", "e", "the", "of"};
  for (int i = 0; i < 1000; ++i) {
    auto sentence = [&] {
      std::string s;
      const auto n = rng.below(9);
      for (std::size_t j = 0; j < n; ++j) s += std::string(vocab[rng.below(7)]) + " ";
      return s;
    };
    const auto x = sentence(), y = sentence();
    const auto r1 = rouge1(x, y), r1b = rouge1(y, x);
    const auto rl = rougeL(x, y), rlb = rougeL(y, x);
    CHECK(r1.f1 == doctest::Approx(r1b.f1));
    CHECK(rl.f1 == doctest::Approx(rlb.f1));
    for (double v : {r1.precision, r1.recall, r1.f1, rl.precision, rl.recall, rl.f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(rl.f1 <= r1.f1 + 1e-12);
  }
}

TEST_CASE("task reward mapping") {
  CHECK(task_reward(TaskKind::ProductRating, ParsedLabel{Rating{5}}, "3") == 0.5);
  CHECK(task_reward(TaskKind::MovieTagging, ParsedLabel{Tag{"comedy"}}, "comedy") == 1.0);
  CHECK(task_reward(TaskKind::MovieTagging, ParsedLabel{Tag{"action"}}, "comedy") == 0.0);
  CHECK(task_reward(TaskKind::MovieTagging, std::nullopt, "comedy") == 0.0);
  CHECK(task_reward(TaskKind::TitleGeneration, ParsedLabel{FreeText{"the cat sat"}},
                    "the cat ran") == doctest::Approx(2.0 / 3));
  CHECK(task_reward(TaskKind::TitleGeneration, ParsedLabel{FreeText{"x"}}, "y",
                    RewardWeights{1.0, 0.0}) == 0.0);
  double prev = 2.0;
  for (int d = 0; d <= 4; ++d) {
    const double r = task_reward(TaskKind::ProductRating, ParsedLabel{Rating{1 + d}}, "1");
    CHECK(r < prev);
    prev = r;
  }
}

TEST_CASE("trace construction") {
  const auto t = trace({"a", "b"}, {-1.0, -2.0}, {-1.5, -2.5});
  REQUIRE(t.steps.size() == 2);
  CHECK(t.steps[0].index == 1);
  CHECK(t.steps[1].index == 2);
  CHECK(code_of([] { trace({"a"}, {-1.0, -2.0}, {-1.0}); }) == ErrorCode::InvalidTrace);
  CHECK(code_of([] { trace({"a"}, {0.5}, {-1.0}); }) == ErrorCode::InvalidTrace);
}

TEST_CASE("kl estimators") {
  const auto t = trace({"a", "b"}, {-1.0, -2.0}, {-1.5, -2.5});
  const auto k1 = kl_per_token(t, KlEstimator::K1);
  CHECK(k1 == std::vector<double>{0.5, 0.5});
  const auto k3 = kl_per_token(trace({"a"}, {-1.0}, {-1.5}), KlEstimator::K3);
  CHECK(k3[0] == doctest::Approx(0.10653065971263342).epsilon(1e-14));
  const auto same = trace({"a", "b"}, {-0.3, -2.0}, {-0.3, -2.0});
  CHECK(kl_per_token(same, KlEstimator::K1) == std::vector<double>{0.0, 0.0});
  CHECK(kl_per_token(same, KlEstimator::K3) == std::vector<double>{0.0, 0.0});
  CHECK(code_of([] { kl_per_token(LogprobTrace{}, KlEstimator::K3); }) == ErrorCode::EmptyTrace);
  CHECK(parse_kl_estimator("k1") == KlEstimator::K1);
  CHECK(parse_kl_estimator(to_string(KlEstimator::K3)) == KlEstimator::K3);

  SeededRng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double p = -rng.unit() * 10, r = -rng.unit() * 10;
    CHECK(kl_per_token(trace({""}, {p}, {r}), KlEstimator::K3)[0] >= 0.0);
  }
}

TEST_CASE("reward shaping") {
  const auto s = shape_rewards(0.8, std::vector<double>{0.5, 0.5}, 0.01);
  REQUIRE(s.per_token.size() == 2);
  CHECK(s.per_token[0] == doctest::Approx(-0.005).epsilon(1e-15));
  CHECK(s.per_token[1] == doctest::Approx(0.795).epsilon(1e-15));
  const auto pure = shape_rewards(0.7, std::vector<double>{0.3, 0.1, 0.2}, 0.0);
  CHECK(pure.per_token == std::vector<double>{0.0, 0.0, 0.7});
  CHECK_FALSE(std::signbit(pure.per_token[0]));
  CHECK(shape_rewards(0.0, std::vector<double>{0.0, 0.0}, 0.5).per_token ==
        std::vector<double>{0.0, 0.0});
  CHECK(code_of([] { shape_rewards(1.0, std::vector<double>{}, 0.1); }) ==
        ErrorCode::EmptyTrace);
  CHECK(code_of([] { shape_rewards(1.0, std::vector<double>{0.1}, -0.1); }) ==
        ErrorCode::InvalidArgument);
}

TEST_CASE("metric report json keeps the task's pair") {
  MetricReport m;
  m.task = TaskKind::ProductRating;
  m.mae = 1.0;
  m.rmse = 1.5;
  m.n = 3;
  const auto text = metric_report_json(m);
  CHECK(text.find("\"mae\"") != std::string::npos);
  CHECK(text.find("\"rmse\"") != std::string::npos);
  CHECK(text.find("accuracy") == std::string::npos);
}
