#include "doctest.h"

#include <fstream>
#include <set>

#include "promptevo/error.hpp"
#include "promptevo/evolve.hpp"
#include "support/keyword_world.hpp"
#include "support/scripted.hpp"

using namespace promptevo;
using namespace promptevo::testing;

namespace {

PopulationMember member_with_score(const std::string& id, std::int64_t num,
                                   std::int64_t den, int generation = 0) {
  PopulationMember m;
  m.prompt.id = id;
  m.prompt.text = "text " + id;
  m.prompt.generation = generation;
  FitnessRecord r;
  r.prompt_id = id;
  r.score = {num, den};
  m.fitness = std::move(r);
  return m;
}

Population population_with_scores(const std::vector<std::int64_t>& nums,
                                  std::int64_t den) {
  Population pop;
  pop.capacity = static_cast<int>(nums.size());
  for (std::size_t i = 0; i < nums.size(); ++i) {
    pop.members.push_back(
        member_with_score("m" + std::to_string(i), nums[i], den));
  }
  return pop;
}

EvolveConfig world_config(std::uint64_t seed, int iterations = 20) {
  EvolveConfig cfg;
  cfg.population_size = 4;
  cfg.max_iterations = iterations;
  cfg.selection_seed = seed;
  cfg.eval.retry_base_delay = std::chrono::milliseconds(0);
  return cfg;
}

}  // namespace

TEST_CASE("selection probabilities follow e_k = f_k / sum(f)") {
  CHECK(selection_probabilities({0.25, 0.25, 0.25, 0.25}) ==
        std::vector<double>{0.25, 0.25, 0.25, 0.25});
  CHECK(selection_probabilities({0.75, 0.25}) == std::vector<double>{0.75, 0.25});

  const auto uniform = selection_probabilities({0.0, 0.0, 0.0});
  for (double p : uniform) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-12));

  CHECK_THROWS_AS(selection_probabilities({0.5, -0.1}), Error);
}

TEST_CASE("selection probabilities form a scale-invariant probability vector") {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 6);
    std::vector<double> fitness(n);
    for (double& f : fitness) f = uniform_double(rng);
    const auto probs = selection_probabilities(fitness);

    double sum = 0.0;
    for (double p : probs) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

    const double c = 0.25 + 3.0 * uniform_double(rng);
    std::vector<double> scaled(fitness);
    for (double& f : scaled) f *= c;
    const auto probs_scaled = selection_probabilities(scaled);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(probs_scaled[i] == doctest::Approx(probs[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("distinctness forces the zero-fitness member in a 2-member population") {
  const Population pop = population_with_scores({10, 0}, 10);
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto [a, b] = select_parents(pop, rng);
    CHECK(a == 0);  // all selection mass sits on member 0
    CHECK(b == 1);
  }
}

TEST_CASE("parent selection is deterministic per seed and rejects unevaluated members") {
  const Population pop = population_with_scores({6, 3, 1}, 10);
  Rng rng1(42);
  Rng rng2(42);
  for (int i = 0; i < 50; ++i) {
    CHECK(select_parents(pop, rng1) == select_parents(pop, rng2));
  }

  Population broken = pop;
  broken.members[1].fitness.reset();
  Rng rng3(1);
  CHECK_THROWS_AS(select_parents(broken, rng3), Error);
}

TEST_CASE("roulette first-draw frequencies track the fitness distribution") {
  const Population pop = population_with_scores({6, 3, 1}, 10);
  Rng rng(2718);
  std::vector<int> counts(3, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    ++counts[select_parents(pop, rng).first];
  }
  const double expected[] = {0.6, 0.3, 0.1};
  for (int k = 0; k < 3; ++k) {
    const double freq = static_cast<double>(counts[k]) / draws;
    CHECK(freq == doctest::Approx(expected[k]).epsilon(0.034));  // +-0.02 absolute
    CHECK(std::abs(freq - expected[k]) < 0.02);
  }
}

TEST_CASE("generate_children produces K lineage-carrying children") {
  Population pop = population_with_scores({9, 5, 3, 1}, 10);
  pop.iteration = 2;
  FnGenerator generator([](const Prompt& a, const Prompt& b,
                           const std::optional<Feedback>&,
                           const std::optional<Feedback>&, MutationMode) {
    return a.text + " + " + b.text;
  });
  EvolveConfig cfg = world_config(0);
  EngineState state;
  state.rng = Rng(5);

  const auto children = generate_children(pop, generator, cfg, state);
  REQUIRE(children.size() == 4);
  std::set<std::string> ids;
  for (const auto& child : children) {
    CHECK(child.generation == 3);
    REQUIRE(child.parent_ids.size() == 2);
    CHECK(child.parent_ids[0] != child.parent_ids[1]);
    CHECK(ids.insert(child.id).second);  // unique ids even for equal texts
  }
}

TEST_CASE("a duplicate child is regenerated and the retry is consumed") {
  Population pop = population_with_scores({9, 5}, 10);
  int calls = 0;
  FnGenerator generator([&](const Prompt& a, const Prompt&,
                            const std::optional<Feedback>&,
                            const std::optional<Feedback>&, MutationMode) {
    ++calls;
    return calls == 1 ? a.text : "a fresh child";  // duplicate first
  });
  EvolveConfig cfg = world_config(0);
  cfg.population_size = 2;
  cfg.child_retry_budget = 3;
  EngineState state;
  state.rng = Rng(1);

  const auto children = generate_children(pop, generator, cfg, state);
  CHECK(children[0].text == "a fresh child");
  CHECK(calls >= 2);  // the duplicate cost one retry
}

TEST_CASE("an exhausted retry budget accepts the duplicate as-is") {
  Population pop = population_with_scores({9, 5}, 10);
  FnGenerator generator([&](const Prompt& a, const Prompt&,
                            const std::optional<Feedback>&,
                            const std::optional<Feedback>&, MutationMode) {
    return a.text;  // always a duplicate
  });
  EvolveConfig cfg = world_config(0);
  cfg.population_size = 2;
  cfg.child_retry_budget = 2;
  EngineState state;
  state.rng = Rng(1);

  const auto children = generate_children(pop, generator, cfg, state);
  CHECK(children.size() == 2);
  CHECK(children[0].text == pop.members[0].prompt.text);
}

TEST_CASE("elitist merge keeps the K best and lets incumbents win ties") {
  Population current = population_with_scores({9, 5}, 10);
  current.iteration = 3;

  auto child = [](const std::string& id, std::int64_t num) {
    Prompt p;
    p.id = id;
    p.text = "child " + id;
    p.generation = 4;
    p.parent_ids = {"m0", "m1"};
    FitnessRecord r;
    r.prompt_id = id;
    r.score = {num, 10};
    return std::make_pair(p, r);
  };

  SUBCASE("better children displace weaker incumbents") {
    const auto merged =
        elitist_merge(current, {child("c0", 7), child("c1", 6)}, 2);
    REQUIRE(merged.members.size() == 2);
    CHECK(merged.members[0].prompt.id == "m0");  // 0.9
    CHECK(merged.members[1].prompt.id == "c0");  // 0.7
    CHECK(merged.iteration == 4);
  }
  SUBCASE("worse children leave the population unchanged except the iteration") {
    const auto merged =
        elitist_merge(current, {child("c0", 4), child("c1", 3)}, 2);
    CHECK(merged.members[0].prompt.id == "m0");
    CHECK(merged.members[1].prompt.id == "m1");
    CHECK(merged.iteration == 4);
  }
  SUBCASE("a child tying the K-th incumbent loses the tie") {
    const auto merged =
        elitist_merge(current, {child("c0", 5), child("c1", 1)}, 2);
    CHECK(merged.members[1].prompt.id == "m1");  // earlier generation wins
  }
}

TEST_CASE("config validation enforces the ablation coupling") {
  EvolveConfig cfg = world_config(0);
  cfg.feedback_mode = FeedbackMode::none;
  cfg.mutation_mode = MutationMode::guided;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.mutation_mode = MutationMode::random_mutation;
  CHECK_NOTHROW(cfg.validate());

  cfg.population_size = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

namespace {

struct WorldFixture {
  Dataset train = make_world_dataset();
  WorldPredictor predictor{train};
  WorldAnalyzer analyzer;
  WorldGenerator generator;
  HashNgramEmbedder embedder{32};

  explicit WorldFixture(std::uint64_t generator_seed = 0)
      : generator(generator_seed) {}

  AgentBundle agents() { return {&predictor, &analyzer, &generator}; }
};

}  // namespace

TEST_CASE("a one-iteration run yields an initial snapshot plus one entry") {
  WorldFixture world;
  ScoreCache cache;
  TempDir dir("run_t1");

  const RunResult result =
      run(world_config(7, 1), world_seed_prompts(), world.train, world.agents(),
          world.embedder, cache, dir.path() / "cp");
  REQUIRE(result.history.size() == 2);
  CHECK(result.history[0].iteration == 0);
  CHECK(result.history[1].iteration == 1);
  CHECK(result.history[1].best_score >= result.history[0].best_score);
  CHECK(result.population.members.size() == 4);
  CHECK(validate_population(result.population).empty());

  // Files the run directory must hold.
  CHECK(std::filesystem::exists(dir.path() / "cp" / "iter_0.json"));
  CHECK(std::filesystem::exists(dir.path() / "cp" / "iter_1.json"));
  CHECK(std::filesystem::exists(dir.path() / "cp" / "history.csv"));
  CHECK(std::filesystem::exists(dir.path() / "cp" / "scores.jsonl"));
}

TEST_CASE("feedback is attached to every imperfect member in guided runs") {
  WorldFixture world;
  ScoreCache cache;
  TempDir dir("run_fb");

  const RunResult result =
      run(world_config(3, 2), world_seed_prompts(), world.train, world.agents(),
          world.embedder, cache, dir.path() / "cp");

  // After the run, the checkpoint of the final iteration records the merge
  // result; members that went through generation carried feedback.
  const Checkpoint cp =
      read_checkpoint(dir.path() / "cp" / "iter_1.json");
  for (const auto& m : cp.population.members) {
    REQUIRE(m.fitness.has_value());
    if (m.prompt.generation == 0 && m.fitness->score.num < m.fitness->score.den) {
      REQUIRE(m.feedback.has_value());
      CHECK(!m.feedback->guidance.empty());
      CHECK(m.feedback->source_cluster_size > 0);
    }
  }
}

TEST_CASE("feedback_mode=none never invokes the analyzer and passes no feedback") {
  Dataset train = make_world_dataset();
  WorldPredictor predictor(train);
  int analyzer_calls = 0;
  FnAnalyzer analyzer([&](const std::string&, const std::vector<ErrorCase>&) {
    ++analyzer_calls;
    Feedback fb;
    fb.guidance = "unused";
    return fb;
  });
  int feedback_seen = 0;
  WorldGenerator inner(5);
  FnGenerator generator([&](const Prompt& a, const Prompt& b,
                            const std::optional<Feedback>& fa,
                            const std::optional<Feedback>& fb, MutationMode mode) {
    if (fa || fb) ++feedback_seen;
    return inner.generate(a, b, fa, fb, mode);
  });
  HashNgramEmbedder embedder(32);
  ScoreCache cache;
  TempDir dir("run_none");

  EvolveConfig cfg = world_config(9, 2);
  cfg.feedback_mode = FeedbackMode::none;
  cfg.mutation_mode = MutationMode::random_mutation;

  AgentBundle agents{&predictor, &analyzer, &generator};
  run(cfg, world_seed_prompts(), train, agents, embedder, cache,
      dir.path() / "cp");
  CHECK(analyzer_calls == 0);
  CHECK(feedback_seen == 0);
}

TEST_CASE("identical configurations reproduce identical histories") {
  auto one_run = [](const std::filesystem::path& dir) {
    WorldFixture world;
    ScoreCache cache;
    return run(world_config(21, 4), world_seed_prompts(), world.train,
               world.agents(), world.embedder, cache, dir);
  };
  TempDir a("det_a");
  TempDir b("det_b");
  const RunResult ra = one_run(a.path() / "cp");
  const RunResult rb = one_run(b.path() / "cp");

  REQUIRE(ra.history.size() == rb.history.size());
  for (std::size_t i = 0; i < ra.history.size(); ++i) {
    CHECK(ra.history[i].iteration == rb.history[i].iteration);
    CHECK(ra.history[i].mean_score == rb.history[i].mean_score);
    CHECK(ra.history[i].best_score == rb.history[i].best_score);
    REQUIRE(ra.history[i].members.size() == rb.history[i].members.size());
    for (std::size_t m = 0; m < ra.history[i].members.size(); ++m) {
      CHECK(ra.history[i].members[m].prompt_id ==
            rb.history[i].members[m].prompt_id);
    }
  }

  const std::string csv_a = read_file(a.path() / "cp" / "history.csv");
  const std::string csv_b = read_file(b.path() / "cp" / "history.csv");
  CHECK(csv_a == csv_b);
}

TEST_CASE("a killed run resumes into the exact uninterrupted trajectory") {
  const int full_t = 6;

  TempDir uninterrupted("resume_full");
  WorldFixture world_full;
  ScoreCache cache_full;
  const RunResult full =
      run(world_config(13, full_t), world_seed_prompts(), world_full.train,
          world_full.agents(), world_full.embedder, cache_full,
          uninterrupted.path() / "cp");

  // Stop after iteration 3 (the checkpoint exists, the process "dies"), then
  // resume with the full budget in a fresh process: fresh caches, fresh
  // agents.
  TempDir killed("resume_killed");
  {
    WorldFixture world;
    ScoreCache cache;
    run(world_config(13, 3), world_seed_prompts(), world.train, world.agents(),
        world.embedder, cache, killed.path() / "cp");
  }
  WorldFixture world_resumed;
  ScoreCache cache_resumed;
  const RunResult resumed = resume(
      world_config(13, full_t), world_seed_prompts(), world_resumed.train,
      world_resumed.agents(), world_resumed.embedder, cache_resumed,
      killed.path() / "cp");

  REQUIRE(resumed.population.members.size() == full.population.members.size());
  for (std::size_t i = 0; i < full.population.members.size(); ++i) {
    CHECK(resumed.population.members[i].prompt ==
          full.population.members[i].prompt);
    CHECK(resumed.population.members[i].fitness->score ==
          full.population.members[i].fitness->score);
  }
  CHECK(read_file(uninterrupted.path() / "cp" / "history.csv") ==
        read_file(killed.path() / "cp" / "history.csv"));
}

TEST_CASE("resume refuses a mismatched configuration") {
  TempDir dir("resume_mismatch");
  {
    WorldFixture world;
    ScoreCache cache;
    run(world_config(1, 1), world_seed_prompts(), world.train, world.agents(),
        world.embedder, cache, dir.path() / "cp");
  }
  WorldFixture world;
  ScoreCache cache;
  EvolveConfig other = world_config(2, 3);  // different selection seed
  CHECK_THROWS_AS(resume(other, world_seed_prompts(), world.train,
                         world.agents(), world.embedder, cache,
                         dir.path() / "cp"),
                  ConfigError);
}

TEST_CASE("starting a fresh run in a used directory is refused") {
  TempDir dir("fresh_in_used");
  WorldFixture world;
  {
    ScoreCache cache;
    run(world_config(1, 1), world_seed_prompts(), world.train, world.agents(),
        world.embedder, cache, dir.path() / "cp");
  }
  ScoreCache cache;
  CHECK_THROWS_AS(run(world_config(1, 1), world_seed_prompts(), world.train,
                      world.agents(), world.embedder, cache, dir.path() / "cp"),
                  ConfigError);
}

TEST_CASE("seed and child prompt ids are deterministic and unique") {
  EngineState s1;
  s1.rng = Rng(0);
  EngineState s2;
  s2.rng = Rng(0);
  const Prompt a1 = make_seed_prompt("hello", s1);
  const Prompt a2 = make_seed_prompt("hello", s2);
  CHECK(a1.id == a2.id);
  const Prompt b1 = make_seed_prompt("hello", s1);
  CHECK(b1.id != a1.id);  // serial advances

  CHECK_THROWS_AS(make_seed_prompt("   ", s1), ConfigError);
  CHECK_THROWS_AS(make_child_prompt("", 1, "x", "y", s1), ProtocolError);
}
