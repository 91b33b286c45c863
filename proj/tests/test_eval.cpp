#include "doctest.h"

#include <atomic>
#include <thread>

#include "promptevo/error.hpp"
#include "promptevo/eval.hpp"
#include "support/scripted.hpp"

using namespace promptevo;
using namespace promptevo::testing;

// Hand-labeled extraction cases, written down before the extractor was built.
TEST_CASE("extract_answer: numeric") {
  const std::pair<const char*, const char*> cases[] = {
      {"...so the total is 1,250 dollars.", "1250"},
      {"The answer is 42", "42"},
      {"= $70,000", "70000"},
      {"18.0", "18"},
      {"about 3.50 meters", "3.5"},
      {"first 5 then 7 finally 9", "9"},
      {"-3 degrees", "-3"},
      {"temperature drops to -7.50", "-7.5"},
      {"3-5", "5"},
      {"", ""},
      {"no numbers here", ""},
      {"answer: .5", "0.5"},
      {"1,2 items", "2"},
      {"$12.00", "12"},
      {"answer is 007", "7"},
  };
  for (const auto& [input, expected] : cases) {
    CAPTURE(input);
    CHECK(extract_answer(input, TaskKind::numeric) == expected);
  }
}

TEST_CASE("extract_answer: multiple choice") {
  const std::pair<const char*, const char*> cases[] = {
      {"The answer is (B).", "b"},
      {"I pick option d", "d"},
      {"A or C? definitely C.", "c"},
      {"b)", "b"},
      {"The fox jumped.", ""},
      {"", ""},
  };
  for (const auto& [input, expected] : cases) {
    CAPTURE(input);
    CHECK(extract_answer(input, TaskKind::multiple_choice) == expected);
  }
}

TEST_CASE("extract_answer: binary label") {
  const std::pair<const char*, const char*> cases[] = {
      {"Yes, that is hateful.", "yes"},
      {"I don't think so. No.", "no"},
      {"True", "yes"},
      {"the claim is false", "no"},
      {"label: 1", "yes"},
      {"Yes... wait, actually no", "no"},
      {"nothing conclusive", ""},
  };
  for (const auto& [input, expected] : cases) {
    CAPTURE(input);
    CHECK(extract_answer(input, TaskKind::binary_label) == expected);
  }
}

TEST_CASE("extract_answer: free text trims and lowercases") {
  CHECK(extract_answer("  Mixed CASE text  ", TaskKind::free_text) ==
        "mixed case text");
  CHECK(extract_answer("", TaskKind::free_text) == "");
}

TEST_CASE("extracting an already-normalized answer is a fixed point") {
  const std::pair<const char*, TaskKind> golds[] = {
      {"1250", TaskKind::numeric},     {"-7.5", TaskKind::numeric},
      {"0.5", TaskKind::numeric},      {"b", TaskKind::multiple_choice},
      {"e", TaskKind::multiple_choice}, {"yes", TaskKind::binary_label},
      {"no", TaskKind::binary_label},  {"some answer", TaskKind::free_text},
  };
  for (const auto& [gold, kind] : golds) {
    CAPTURE(gold);
    CHECK(extract_answer(gold, kind) == gold);
  }
}

namespace {

Dataset five_samples() {
  return make_dataset({{"q0", "alpha"},
                       {"q1", "bravo"},
                       {"q2", "charlie"},
                       {"q3", "delta"},
                       {"q4", "echo"}});
}

Prompt prompt_with_id(const std::string& id) {
  Prompt p;
  p.id = id;
  p.text = "prompt text " + id;
  return p;
}

EvalOptions fast_options(int parallelism = 1) {
  EvalOptions opts;
  opts.parallelism = parallelism;
  opts.retry_base_delay = std::chrono::milliseconds(0);
  return opts;
}

}  // namespace

TEST_CASE("a gold-echoing predictor scores 1.0") {
  const Dataset ds = five_samples();
  GoldEchoPredictor predictor(ds);
  ScoreCache cache;
  const auto record =
      score_prompt(prompt_with_id("p1"), ds, predictor, cache, fast_options());
  CHECK(record.score.num == 5);
  CHECK(record.score.den == 5);
  CHECK(wrong_samples(record, ds).empty());
}

TEST_CASE("a never-correct predictor scores 0.0 and every sample is wrong") {
  const Dataset ds = five_samples();
  FnPredictor predictor([](const std::string&, const std::string&) {
    return std::string("0");
  });
  ScoreCache cache;
  const auto record =
      score_prompt(prompt_with_id("p1"), ds, predictor, cache, fast_options());
  CHECK(record.score.num == 0);
  CHECK(record.score.den == 5);
  CHECK(wrong_samples(record, ds).size() == 5);
}

TEST_CASE("a 3-of-5 predictor scores 3/5 and the cache prevents re-evaluation") {
  const Dataset ds = five_samples();
  GoldEchoPredictor inner(ds);
  FnPredictor scripted([&](const std::string& p, const std::string& q) {
    if (q == "q1" || q == "q3") return std::string("not it");
    return inner.predict(p, q);
  });
  CountingPredictor counting(scripted);
  ScoreCache cache;

  const Prompt p = prompt_with_id("p1");
  const auto record = score_prompt(p, ds, counting, cache, fast_options());
  CHECK(record.score.num == 3);
  CHECK(record.score.den == 5);
  CHECK(counting.calls_for(p.text) == 5);

  const auto wrong = wrong_samples(record, ds);
  REQUIRE(wrong.size() == 2);
  CHECK(wrong[0].sample.id == "1");
  CHECK(wrong[1].sample.id == "3");

  const auto again = score_prompt(p, ds, counting, cache, fast_options());
  CHECK(again == record);
  CHECK(counting.calls_for(p.text) == 5);  // no further predictor calls
}

TEST_CASE("records are identical regardless of parallelism degree") {
  std::vector<std::pair<std::string, std::string>> qa;
  for (int i = 0; i < 23; ++i) {
    qa.emplace_back("q" + std::to_string(i), "answer " + std::to_string(i));
  }
  const Dataset ds = make_dataset(qa);
  GoldEchoPredictor inner(ds);
  FnPredictor scripted([&](const std::string& p, const std::string& q) {
    if (q.size() % 3 == 0) return std::string("miss");
    return inner.predict(p, q);
  });

  ScoreCache cache_serial;
  ScoreCache cache_parallel;
  const auto serial = score_prompt(prompt_with_id("p"), ds, scripted,
                                   cache_serial, fast_options(1));
  const auto parallel = score_prompt(prompt_with_id("p"), ds, scripted,
                                     cache_parallel, fast_options(8));
  CHECK(serial == parallel);
  for (std::size_t i = 0; i < serial.outcomes.size(); ++i) {
    CHECK(serial.outcomes[i].sample_id == ds.samples[i].id);
  }
}

TEST_CASE("transient predictor failures are retried") {
  const Dataset ds = five_samples();
  GoldEchoPredictor inner(ds);
  std::atomic<int> failures_left{2};
  FnPredictor flaky([&](const std::string& p, const std::string& q) {
    if (q == "q2" && failures_left.fetch_sub(1) > 0) {
      throw TransportError("transient outage");
    }
    return inner.predict(p, q);
  });
  ScoreCache cache;
  const auto record =
      score_prompt(prompt_with_id("p1"), ds, flaky, cache, fast_options());
  CHECK(record.score.num == 5);  // retries hid the outage
}

TEST_CASE("a persistently failing sample is marked incorrect and the run continues") {
  std::vector<std::pair<std::string, std::string>> qa;
  for (int i = 0; i < 10; ++i) {
    qa.emplace_back("q" + std::to_string(i), "a" + std::to_string(i));
  }
  const Dataset ds = make_dataset(qa);
  GoldEchoPredictor inner(ds);
  FnPredictor mostly([&](const std::string& p, const std::string& q) {
    if (q == "q7") throw TransportError("endpoint rejects this one");
    return inner.predict(p, q);
  });
  ScoreCache cache;
  const auto record =
      score_prompt(prompt_with_id("p1"), ds, mostly, cache, fast_options());
  CHECK(record.score.num == 9);
  CHECK(record.score.den == 10);
  CHECK(record.outcomes[7].predicted_answer.rfind("<error:", 0) == 0);
  CHECK_FALSE(record.outcomes[7].correct);
}

TEST_CASE("evaluation aborts when too many samples fail") {
  const Dataset ds = five_samples();
  FnPredictor broken([](const std::string&, const std::string& q) -> std::string {
    if (q == "q0" || q == "q1") throw TransportError("down");
    return "alpha";
  });
  ScoreCache cache;
  CHECK_THROWS_AS(
      score_prompt(prompt_with_id("p1"), ds, broken, cache, fast_options()),
      EvalError);
}

TEST_CASE("score cache persists and replays its log") {
  TempDir dir("cache_log");
  const Dataset ds = five_samples();
  GoldEchoPredictor predictor(ds);
  const Prompt p = prompt_with_id("cafe01");

  FitnessRecord original;
  {
    ScoreCache cache;
    cache.attach_log(dir.path() / "scores.jsonl");
    original = score_prompt(p, ds, predictor, cache, fast_options());
  }

  ScoreCache fresh;
  fresh.replay_log(dir.path() / "scores.jsonl");
  CHECK(fresh.size() == 1);
  const auto cached = fresh.get(p.id, ds.fingerprint());
  REQUIRE(cached.has_value());
  CHECK(*cached == original);

  // A replayed record satisfies get_or_compute without recomputing.
  CountingPredictor counting(predictor);
  const auto record = score_prompt(p, ds, counting, fresh, fast_options());
  CHECK(record == original);
  CHECK(counting.total() == 0);
}

TEST_CASE("concurrent evaluations of the same pair coalesce into one computation") {
  std::vector<std::pair<std::string, std::string>> qa;
  for (int i = 0; i < 12; ++i) {
    qa.emplace_back("q" + std::to_string(i), "a" + std::to_string(i));
  }
  const Dataset ds = make_dataset(qa);
  GoldEchoPredictor inner(ds);
  FnPredictor slow([&](const std::string& p, const std::string& q) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
    return inner.predict(p, q);
  });
  CountingPredictor counting(slow);
  ScoreCache cache;
  const Prompt p = prompt_with_id("shared");

  std::vector<std::thread> threads;
  std::vector<FitnessRecord> records(4);
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      records[static_cast<std::size_t>(t)] =
          score_prompt(p, ds, counting, cache, fast_options());
    });
  }
  for (auto& t : threads) t.join();

  CHECK(counting.total() == 12);  // exactly one evaluation happened
  for (const auto& r : records) CHECK(r == records[0]);
}

TEST_CASE("wrong_samples rejects a record that does not cover the dataset") {
  const Dataset ds = five_samples();
  FitnessRecord record;
  record.prompt_id = "p";
  record.score = {0, 2};
  record.outcomes.resize(2);
  CHECK_THROWS_AS(wrong_samples(record, ds), EvalError);
}
