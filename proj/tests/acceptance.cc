#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "rpo/error.h"
#include "rpo/io.h"
#include "rpo/metrics.h"
#include "rpo/parser.h"
#include "rpo/pipeline.h"
#include "rpo/rl.h"
#include "rpo/rng.h"
#include "rpo/text.h"
#include "rpo/trajectory.h"
#include "stub_server.h"
#include "support.h"

using namespace rpo;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

// Thrown by require() with the reason printed next to the FAIL line.
struct Unmet {
  std::string why;
};

void require(bool ok, const std::string& why) {
  if (!ok) throw Unmet{why};
}

bool close(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string structured(const std::string& think, const std::string& answer) {
  return "<think>" + think + "</think>\n<personalized>" + answer + "</personalized>";
}

std::string words(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += (i ? " w" : "w");
  return s;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  throw Unmet{"expected an error, none thrown"};
}

TaskInstance film(int i, std::string gold = "comedy") {
  return testing::movie("f" + std::to_string(i), "u" + std::to_string(i % 10),
                        "film-" + std::to_string(i) + " a wedding goes sideways",
                        std::move(gold));
}

Providers mock_providers(const std::string& jsonl) {
  Providers p;
  p.set_all(std::make_shared<MockBackend>(MockBackend::from_jsonl(jsonl)));
  return p;
}

std::string line(const json& j) { return j.dump() + "\n"; }

// ---- 1: metric oracles

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::size_t lcs_brute(const std::vector<std::string>& a, const std::vector<std::string>& b,
                      std::size_t i, std::size_t j,
                      std::map<std::pair<std::size_t, std::size_t>, std::size_t>& memo) {
  if (i == a.size() || j == b.size()) return 0;
  const auto key = std::make_pair(i, j);
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  std::size_t best = a[i] == b[j]
                         ? 1 + lcs_brute(a, b, i + 1, j + 1, memo)
                         : std::max(lcs_brute(a, b, i + 1, j, memo),
                                    lcs_brute(a, b, i, j + 1, memo));
  memo[key] = best;
  return best;
}

RougeScore prf(double hits, std::size_t c, std::size_t r) {
  if (c == 0 || r == 0 || hits == 0) return {};
  RougeScore s;
  s.precision = hits / static_cast<double>(c);
  s.recall = hits / static_cast<double>(r);
  s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

RougeScore oracle_rouge1(const std::string& cand, const std::string& ref) {
  const auto c = split_words(cand), r = split_words(ref);
  std::map<std::string, int> rc;
  for (const auto& w : r) ++rc[w];
  double hits = 0;
  for (const auto& w : c) {
    if (rc[w] > 0) {
      --rc[w];
      ++hits;
    }
  }
  return prf(hits, c.size(), r.size());
}

RougeScore oracle_rougeL(const std::string& cand, const std::string& ref) {
  const auto c = split_words(cand), r = split_words(ref);
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  return prf(static_cast<double>(lcs_brute(c, r, 0, 0, memo)), c.size(), r.size());
}

bool same(const RougeScore& a, const RougeScore& b) {
  return close(a.precision, b.precision, 1e-9) && close(a.recall, b.recall, 1e-9) &&
         close(a.f1, b.f1, 1e-9);
}

void metric_oracles() {
  const auto t0 = Clock::now();
  SeededRng rng(1);
  const char* vocab[] = {"a", "b", "c", "d", "the", "cat", "sat"};
  for (int i = 0; i < 100; ++i) {
    auto sentence = [&] {
      std::string s;
      const auto n = rng.below(13);
      for (std::size_t j = 0; j < n; ++j) s += std::string(j ? " " : "") + vocab[rng.below(7)];
      return s;
    };
    const auto c = sentence(), r = sentence();
    require(same(rouge1(c, r), oracle_rouge1(c, r)), "rouge1 differs on '" + c + "' / '" + r + "'");
    require(same(rougeL(c, r), oracle_rougeL(c, r)), "rougeL differs on '" + c + "' / '" + r + "'");
  }

  using Preds = std::vector<std::optional<std::string>>;
  using Golds = std::vector<std::string>;
  require(accuracy(Preds{"a", "b", "a"}, Golds{"a", "a", "a"}) == 2.0 / 3, "accuracy 2/3");
  require(accuracy(Preds{std::nullopt, "b"}, Golds{"a", "b"}) == 0.5, "accuracy with miss");
  const std::vector<std::string_view> ab = {"a", "b"};
  require(macro_f1(Preds{"a", "a", "b"}, Golds{"a", "b", "b"}, ab) == 2.0 / 3, "macro f1 2/3");
  require(macro_f1(Preds{"a", "b"}, Golds{"a", "b"}, ab) == 1.0, "macro f1 perfect");
  using IP = std::vector<std::optional<int>>;
  using IG = std::vector<int>;
  const auto s = mae_rmse(IP{1, 5, 3}, IG{2, 3, 3});
  require(s.mae == 1.0, "mae fixture");
  require(s.rmse == std::sqrt(5.0 / 3.0), "rmse fixture");
  require(mae_rmse(IP{std::nullopt}, IG{5}).mae == 2.0, "missing rating imputation");
  const auto l = rougeL("the cat sat on mat", "the cat on the mat");
  require(close(l.f1, 0.8, 1e-12), "rougeL worked example");
  require(seconds_since(t0) < 5.0, "slower than 5 s");
}

// ---- 2: reward shaping

void reward_shaping() {
  SeededRng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const auto n = 1 + rng.below(40);
    std::vector<std::string> tokens(n, "t");
    std::vector<double> policy(n), ref(n);
    for (std::size_t t = 0; t < n; ++t) {
      policy[t] = -5.0 * rng.unit();
      ref[t] = -5.0 * rng.unit();
    }
    const auto kl = kl_per_token(make_trace(tokens, policy, ref),
                                 i % 2 ? KlEstimator::K1 : KlEstimator::K3);
    const double reward = rng.unit();
    const double beta = 0.1 * rng.unit();
    const auto shaped = shape_rewards(reward, kl, beta);
    const double total = std::accumulate(shaped.per_token.begin(), shaped.per_token.end(), 0.0);
    const double kl_sum = std::accumulate(kl.begin(), kl.end(), 0.0);
    require(shaped.per_token.size() == n, "per-token length");
    require(close(total, reward - beta * kl_sum, 1e-12),
            "sum identity broken at triple " + std::to_string(i));

    const auto pure = shape_rewards(reward, kl, 0.0);
    for (std::size_t t = 0; t + 1 < n; ++t) require(pure.per_token[t] == 0.0, "beta=0 non-terminal");
    require(pure.per_token.back() == reward, "beta=0 terminal reward");
  }
}

// ---- 3: advantages

Providers rollout_script() {
  const std::vector<std::string> cands = {
      structured("slapstick again", "comedy"), structured("explosions", "action"),
      structured("pratfalls", "Comedy"), "drama-parse-fail"};
  return mock_providers(
      line({{"role", "base"}, {"texts", {"romance"}}}) +
      line({{"role", "reflection"}, {"texts", cands},
            {"logprobs", {{-0.1, -0.2}, {-1.0, -0.5}, {-0.3}, {-2.0}}}}) +
      line({{"role", "reference"}, {"texts", cands},
            {"logprobs", {{-0.2, -0.2}, {-0.8, -0.9}, {-0.3}, {-1.0}}}}));
}

void advantage_baseline() {
  SeededRng rng(3);
  for (int i = 0; i < 1000; ++i) {
    AdvantageConfig cfg;
    cfg.group_size = 2 + rng.below(15);
    std::vector<double> r(cfg.group_size);
    for (auto& v : r) v = rng.unit() * 2 - 0.5;
    const auto a = advantages(r, cfg);
    require(std::fabs(std::accumulate(a.begin(), a.end(), 0.0)) <= 1e-9, "group sum not zero");

    const double shift = rng.unit() * 10 - 5;
    const double scale = 0.1 + rng.unit() * 10;
    auto shifted = r, scaled = r;
    for (auto& v : shifted) v += shift;
    for (auto& v : scaled) v *= scale;
    const auto as = advantages(shifted, cfg);
    const auto ak = advantages(scaled, cfg);
    for (std::size_t j = 0; j < r.size(); ++j) {
      require(close(as[j], a[j], 1e-9), "translation invariance");
      require(close(ak[j], scale * a[j], 1e-9), "scale equivariance");
    }
  }

  RolloutSettings s;
  s.advantage.group_size = 4;
  s.seed = 99;
  auto inst = testing::movie("m1", "u1", "A clumsy chef opens a restaurant", "comedy");
  const auto records = build_rollouts(inst, 1, s, rollout_script());
  require(records.size() == 4, "worked example group size");
  const double expected[] = {0.5, -0.5, 0.5, -0.5};
  for (std::size_t i = 0; i < 4; ++i) {
    require(close(records[i].advantage, expected[i], 1e-12),
            "worked example advantage " + std::to_string(i));
  }
}

// ---- 4: curriculum

void curriculum_grid() {
  for (std::size_t step = 1; step <= 10; ++step) {
    CurriculumConfig cfg;
    cfg.e_step = step;
    require(cfg.k_min == 2 && cfg.k_max == 6, "defaults are not 2..6");
    std::size_t prev = 0;
    for (std::size_t e = 1; e <= 100; ++e) {
      const auto k = curriculum_k(e, cfg);
      require(k == std::min<std::size_t>(6, 2 + (e - 1) / step),
              "formula at e=" + std::to_string(e) + " step=" + std::to_string(step));
      require(k >= prev, "not monotone");
      require(k >= 2 && k <= 6, "out of bounds");
      prev = k;
    }
    require(prev == 6, "ramp did not reach k_max within 100");
  }
  for (std::size_t total : {5u, 10u, 40u, 100u, 1000u}) {
    CurriculumConfig cfg;
    cfg.e_step = e_step_for_ramp(total, cfg);
    require(curriculum_k(1, cfg) == 2, "ramp start");
    require(curriculum_k(total, cfg) == 6, "ramp end at " + std::to_string(total));
  }
}

// ---- 5: parser

std::string random_text(SeededRng& rng, std::size_t max_len) {
  static const std::string alphabet = "abcdefghij KLMNO.,!?-'\n\t0123456789";
  std::string s;
  const auto n = rng.below(max_len + 1);
  for (std::size_t i = 0; i < n; ++i) s += alphabet[rng.below(alphabet.size())];
  return s;
}

void parser_contract() {
  const auto t0 = Clock::now();
  SeededRng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto raw_think = random_text(rng, 60), raw_answer = random_text(rng, 30);
    const std::string think(trim(raw_think));
    std::string answer(trim(raw_answer));
    if (answer.empty()) answer = "x";
    const auto out = parse_structured(format_structured(think, answer));
    require(out.think == think && out.personalized == answer, "round trip at pair " + std::to_string(i));
  }

  const std::pair<std::string, ErrorCode> cases[] = {
      {"<personalized>x</personalized>", ErrorCode::MissingThink},
      {"<think>x</think>", ErrorCode::MissingPersonalized},
      {"<think>a</think><think>b</think><personalized>x</personalized>", ErrorCode::MultipleBlocks},
      {"<personalized>x</personalized><think>a</think>", ErrorCode::OrderViolation},
      {"<think>a</think><personalized>  </personalized>", ErrorCode::EmptyPersonalized},
  };
  for (const auto& [text, code] : cases) {
    require(code_of([&] { parse_structured(text); }) == code,
            "wrong error for " + text);
  }
  require(code_of([] { parse_label(TaskKind::MovieTagging, "documentary-ish"); }) ==
              ErrorCode::UnknownTag, "unknown tag");
  require(code_of([] { parse_label(TaskKind::ProductRating, "no stars at all"); }) ==
              ErrorCode::NoRatingFound, "no rating");

  const std::string pieces[] = {"<think>", "</think>", "<personalized>", "</personalized>", "<", ">"};
  for (int i = 0; i < 10000; ++i) {
    std::string s;
    const auto n = rng.below(64);
    for (std::size_t j = 0; j < n; ++j) {
      if (rng.below(4) == 0) {
        s += pieces[rng.below(6)];
      } else {
        s += static_cast<char>(rng.below(256));
      }
    }
    try {
      parse_structured(s);
      parse_structured(s, ParseOptions{true, TaskKind::ProductRating});
    } catch (const Error&) {
    }
    for (TaskKind kind : {TaskKind::MovieTagging, TaskKind::ProductRating}) {
      try {
        parse_label(kind, s);
      } catch (const Error&) {
      }
    }
  }
  require(seconds_since(t0) < 10.0, "slower than 10 s");
}

// ---- 6: end-to-end

RunConfig rpo_config() {
  RunConfig cfg;
  cfg.task = TaskKind::MovieTagging;
  cfg.mode = RunMode::RPO;
  cfg.paths.mock_script = "mock.jsonl";
  cfg.max_in_flight = 4;
  return cfg;
}

void end_to_end() {
  const auto t0 = Clock::now();
  std::string script = line({{"role", "base"}, {"texts", {"romance"}}});
  script += line({{"role", "reflection"}, {"prompt_contains", "film-3 "},
                  {"texts", {structured("spaceships", "sci-fi")}}});
  script += line({{"role", "reflection"}, {"prompt_contains", "film-7 "},
                  {"texts", {"not structured"}}});
  script += line({{"role", "reflection"},
                  {"texts", {structured("The user tags light-hearted films as comedy.", "comedy")}}});
  const auto providers = mock_providers(script);
  std::vector<TaskInstance> data;
  for (int i = 0; i < 20; ++i) data.push_back(film(i));

  const auto a = run_eval(data, rpo_config(), providers);
  const auto b = run_eval(data, rpo_config(), providers);
  require(eval_report_json(a, false) == eval_report_json(b, false), "reports differ");
  require(a.metrics.n == 20, "instance count");
  require(a.metrics.accuracy == 18.0 / 20, "accuracy on scripted run");
  require(a.fallbacks == 1, "fallback count");

  const auto demo = rpo_infer(film(0), rpo_config(), providers, LexicalBackend{});
  require(demo.base_response == "romance", "demo base");
  require(demo.personalized == "comedy", "demo final");
  require(!demo.fallback_used, "demo used fallback");
  require(seconds_since(t0) < 30.0, "slower than 30 s");
}

// ---- 7: trajectory filters

void trajectory_filters() {
  std::string script = line({{"role", "base"}, {"texts", {"romance"}}});
  std::vector<TaskInstance> batch;
  for (int i = 0; i < 10; ++i) {
    std::string text;
    if (i < 6) text = structured("slapstick and pratfalls", "comedy");
    else if (i < 8) text = structured("a crew in space", "sci-fi");
    else if (i == 8) text = structured(words(400), "comedy");
    else text = "comedy, obviously";
    script += line({{"role", "teacher"}, {"prompt_contains", "film-" + std::to_string(i) + " "},
                    {"texts", {text}}});
    batch.push_back(film(i));
  }
  const auto outcomes = build_trajectories(batch, mock_providers(script), TrajectorySettings{}, 3);
  std::vector<RewriteTrajectory> kept;
  std::vector<RejectionCode> codes;
  for (const auto& o : outcomes) {
    if (const auto* t = std::get_if<RewriteTrajectory>(&o)) kept.push_back(*t);
    else codes.push_back(std::get<Rejection>(o).code);
  }
  require(kept.size() == 6, "accepted " + std::to_string(kept.size()));
  require(codes == std::vector<RejectionCode>{RejectionCode::ConsistencyFail,
                                              RejectionCode::ConsistencyFail,
                                              RejectionCode::BrevityFail,
                                              RejectionCode::ParseFailure},
          "rejection codes");

  const auto path = testing::fresh_dir("acceptance_sft") / "sft.jsonl";
  require(export_sft(path, kept) == 6, "exported count");
  const auto reloaded = load_sft(path);
  require(reloaded.size() == 6, "reloaded count");
  for (const auto& t : reloaded) {
    require(!check_filters(t.task, t.think, t.personalized, t.gold, FilterPolicy::defaults()),
            "reloaded record fails filters: " + t.instance_id);
  }
}

// ---- 8: SFT NLL

void sft_objective() {
  SeededRng rng(8);
  for (int i = 0; i < 100; ++i) {
    const auto n = 1 + rng.below(64);
    std::vector<double> lp(n);
    for (auto& v : lp) v = -8.0 * rng.unit();
    double oracle = 0.0;
    for (double v : lp) oracle -= v;
    const auto r = sft_nll(lp);
    require(close(r.total_nll, oracle, 1e-12), "nll mismatch at trace " + std::to_string(i));
    require(r.T == n, "token count");
  }
  const std::vector<double> zeros(10, 0.0);
  require(sft_nll(zeros).total_nll == 0.0, "all-zero trace");
}

// ---- 9: networking

EndpointConfig endpoint(const testing::StubServer& server) {
  EndpointConfig cfg;
  cfg.url = server.url();
  cfg.model = "stub";
  cfg.timeout_ms = 5000;
  cfg.initial_backoff_ms = 1;
  return cfg;
}

void networking() {
  testing::StubServer server([](const httplib::Request& req, httplib::Response& res) {
    const auto prompt = json::parse(req.body)["messages"][0]["content"].get<std::string>();
    const int i = std::stoi(prompt.substr(4));
    std::this_thread::sleep_for(std::chrono::milliseconds(10 * (10 - i)));
    res.set_content(testing::StubServer::chat_reply({"echo-" + prompt}).dump(),
                    "application/json");
  });
  Providers p;
  p.set_all(std::make_shared<HttpBackend>(endpoint(server), Role::ReflectionModel));
  std::vector<CompletionRequest> reqs(10);
  for (int i = 0; i < 10; ++i) {
    reqs[i].prompt = "req-" + std::to_string(i);
    reqs[i].role = Role::ReflectionModel;
  }
  const auto slots = p.complete_batch(reqs, 3);
  require(slots.size() == 10, "slot count");
  for (int i = 0; i < 10; ++i) {
    require(slots[i].ok() && slots[i].result->texts[0] == "echo-req-" + std::to_string(i),
            "order at " + std::to_string(i));
  }
  require(server.peak() <= 3, "peak concurrency " + std::to_string(server.peak()));

  testing::StubServer limited([](const httplib::Request&, httplib::Response& res) {
    res.status = 429;
  });
  const HttpBackend backend(endpoint(limited), Role::ReflectionModel);
  CompletionRequest req;
  req.prompt = "x";
  req.role = Role::ReflectionModel;
  require(code_of([&] { backend.complete(req); }) == ErrorCode::RateLimited, "not RateLimited");
  require(limited.requests() == 6,
          "expected 6 requests (1 + 5 retries), saw " + std::to_string(limited.requests()));
}

}  // namespace

int main() {
  const std::pair<const char*, void (*)()> criteria[] = {
      {"metric oracles", metric_oracles},
      {"reward shaping identity", reward_shaping},
      {"group baseline advantages", advantage_baseline},
      {"shot curriculum", curriculum_grid},
      {"structured output parser", parser_contract},
      {"end-to-end determinism", end_to_end},
      {"trajectory filters", trajectory_filters},
      {"sft negative log-likelihood", sft_objective},
      {"provider networking contract", networking},
  };
  int failed = 0;
  int n = 0;
  for (const auto& [name, fn] : criteria) {
    ++n;
    std::string why;
    try {
      fn();
    } catch (const Unmet& u) {
      why = u.why;
    } catch (const std::exception& e) {
      why = std::string("exception: ") + e.what();
    }
    if (why.empty()) {
      std::printf("PASS %d %s\n", n, name);
    } else {
      ++failed;
      std::printf("FAIL %d %s: %s\n", n, name, why.c_str());
    }
  }
  std::fflush(stdout);
  return failed == 0 ? 0 : 1;
}
