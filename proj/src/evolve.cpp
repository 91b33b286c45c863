#include "promptevo/evolve.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "json.hpp"
#include "promptevo/error.hpp"

namespace promptevo {

namespace fs = std::filesystem;

std::string to_string(FeedbackMode mode) {
  switch (mode) {
    case FeedbackMode::topic: return "topic";
    case FeedbackMode::random_sample: return "random_sample";
    case FeedbackMode::none: return "none";
  }
  throw Error("unknown feedback mode");
}

FeedbackMode feedback_mode_from_string(const std::string& s) {
  if (s == "topic") return FeedbackMode::topic;
  if (s == "random_sample") return FeedbackMode::random_sample;
  if (s == "none") return FeedbackMode::none;
  throw ConfigError("unknown feedback mode: '" + s + "'");
}

void EvolveConfig::validate() const {
  if (population_size < 2) throw ConfigError("population_size must be >= 2");
  if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  if (num_clusters < 1) throw ConfigError("num_clusters must be >= 1");
  if (max_feedback_samples < 1) throw ConfigError("max_feedback_samples must be >= 1");
  if (child_retry_budget < 0) throw ConfigError("child_retry_budget must be >= 0");
  if (eval.parallelism < 1) throw ConfigError("parallelism must be >= 1");
  if (feedback_mode == FeedbackMode::none &&
      mutation_mode != MutationMode::random_mutation) {
    throw ConfigError(
        "feedback_mode=none requires mutation_mode=random: guided mutation "
        "has no feedback to follow");
  }
}

std::vector<double> selection_probabilities(const std::vector<double>& fitness) {
  if (fitness.empty()) throw Error("selection over an empty fitness list");
  double total = 0.0;
  for (double f : fitness) {
    if (f < 0.0) throw Error("negative fitness score: accuracy cannot be negative");
    total += f;
  }
  std::vector<double> probs(fitness.size());
  if (total <= 0.0) {
    // All-zero fitness (possible with bad seed prompts): fall back to uniform
    // so the run can continue.
    const double uniform = 1.0 / static_cast<double>(fitness.size());
    for (double& p : probs) p = uniform;
    return probs;
  }
  for (std::size_t i = 0; i < fitness.size(); ++i) probs[i] = fitness[i] / total;
  return probs;
}

namespace {

double member_score(const PopulationMember& m) {
  if (!m.fitness) throw Error("population member " + m.prompt.id + " is unevaluated");
  return m.fitness->score.value();
}

// Exact ratio comparison: a > b.
bool score_greater(const Score& a, const Score& b) {
  return a.num * b.den > b.num * a.den;
}

bool member_ranks_before(const PopulationMember& a, const PopulationMember& b) {
  if (a.fitness->score != b.fitness->score) {
    if (score_greater(a.fitness->score, b.fitness->score)) return true;
    if (score_greater(b.fitness->score, a.fitness->score)) return false;
  }
  if (a.prompt.generation != b.prompt.generation) {
    return a.prompt.generation < b.prompt.generation;  // incumbents win ties
  }
  return a.prompt.id < b.prompt.id;
}

std::size_t roulette_draw(const std::vector<double>& probs, Rng& rng) {
  const double u = uniform_double(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;  // guards against accumulated rounding
}

}  // namespace

std::pair<std::size_t, std::size_t> select_parents(const Population& pop, Rng& rng) {
  if (pop.members.size() < 2) throw Error("parent selection needs >= 2 members");
  std::vector<double> fitness;
  fitness.reserve(pop.members.size());
  for (const auto& m : pop.members) fitness.push_back(member_score(m));

  const auto probs = selection_probabilities(fitness);
  const std::size_t first = roulette_draw(probs, rng);

  std::size_t second = first;
  for (int redraw = 0; redraw < 100 && second == first; ++redraw) {
    second = roulette_draw(probs, rng);
  }
  if (second == first) {
    // Degenerate wheel (one member holds all the mass): take the best
    // distinct member instead.
    std::size_t best = first == 0 ? 1 : 0;
    for (std::size_t i = 0; i < pop.members.size(); ++i) {
      if (i == first) continue;
      if (member_ranks_before(pop.members[i], pop.members[best])) best = i;
    }
    second = best;
  }
  return {first, second};
}

namespace {

std::string prompt_id_for(std::uint64_t serial, const std::string& text) {
  return to_hex(fnv1a64_mix(serial, fnv1a64(text)));
}

}  // namespace

Prompt make_seed_prompt(const std::string& text, EngineState& state) {
  const std::string trimmed = trim(text);
  if (trimmed.empty()) throw ConfigError("seed prompt text is empty");
  Prompt p;
  p.id = prompt_id_for(state.next_serial++, trimmed);
  p.text = trimmed;
  p.generation = 0;
  return p;
}

Prompt make_child_prompt(const std::string& text, int generation,
                         const std::string& parent_a_id,
                         const std::string& parent_b_id, EngineState& state) {
  const std::string trimmed = trim(text);
  if (trimmed.empty()) throw ProtocolError("generated child prompt is empty");
  Prompt p;
  p.id = prompt_id_for(state.next_serial++, trimmed);
  p.text = trimmed;
  p.generation = generation;
  p.parent_ids = {parent_a_id, parent_b_id};
  return p;
}

std::vector<Prompt> generate_children(const Population& pop,
                                      GeneratorAgent& generator,
                                      const EvolveConfig& cfg,
                                      EngineState& state) {
  std::set<std::string> existing_texts;
  for (const auto& m : pop.members) existing_texts.insert(m.prompt.text);

  std::vector<Prompt> children;
  children.reserve(static_cast<std::size_t>(cfg.population_size));
  for (int k = 0; k < cfg.population_size; ++k) {
    const auto [i, j] = select_parents(pop, state.rng);
    const auto& parent_a = pop.members[i];
    const auto& parent_b = pop.members[j];

    std::string text;
    for (int attempt = 0; attempt <= cfg.child_retry_budget; ++attempt) {
      text = trim(generator.generate(parent_a.prompt, parent_b.prompt,
                                     parent_a.feedback, parent_b.feedback,
                                     cfg.mutation_mode));
      if (text.empty()) {
        throw ProtocolError("generator produced an empty child prompt");
      }
      if (!existing_texts.count(text)) break;
      // Identical to an existing member: ask for a fresh variation, then
      // accept the duplicate once the budget is spent.
    }

    if (text.size() > cfg.prompt_length_warning) {
      std::cerr << "warning: generated prompt has " << text.size()
                << " characters (threshold " << cfg.prompt_length_warning
                << "); prompts tend to grow over iterations\n";
    }
    children.push_back(make_child_prompt(text, pop.iteration + 1,
                                         parent_a.prompt.id,
                                         parent_b.prompt.id, state));
  }
  return children;
}

Population elitist_merge(const Population& current,
                         const std::vector<std::pair<Prompt, FitnessRecord>>& children,
                         int k) {
  std::vector<PopulationMember> pool = current.members;
  for (const auto& [prompt, record] : children) {
    PopulationMember m;
    m.prompt = prompt;
    m.fitness = record;
    pool.push_back(std::move(m));
  }
  for (const auto& m : pool) {
    if (!m.fitness) throw Error("elitist merge requires evaluated members");
  }
  std::sort(pool.begin(), pool.end(), member_ranks_before);
  if (static_cast<int>(pool.size()) > k) {
    pool.resize(static_cast<std::size_t>(k));
  }

  Population merged;
  merged.members = std::move(pool);
  merged.capacity = k;
  merged.iteration = current.iteration + 1;
  return merged;
}

std::string history_csv_header() {
  return "iteration,member_rank,prompt_id,score_num,score_den,mean_score,best_score\n";
}

std::string history_csv_rows(const IterationStats& stats) {
  std::string rows;
  char buffer[64];
  for (const auto& m : stats.members) {
    std::snprintf(buffer, sizeof(buffer), "%.6f,%.6f", stats.mean_score,
                  stats.best_score);
    rows += std::to_string(stats.iteration) + "," + std::to_string(m.rank) +
            "," + m.prompt_id + "," + std::to_string(m.score_num) + "," +
            std::to_string(m.score_den) + "," + buffer + "\n";
  }
  return rows;
}

void to_json(nlohmann::json& j, const MemberStat& m) {
  j = nlohmann::json{{"rank", m.rank},
                     {"prompt_id", m.prompt_id},
                     {"score_num", m.score_num},
                     {"score_den", m.score_den}};
}

void from_json(const nlohmann::json& j, MemberStat& m) {
  j.at("rank").get_to(m.rank);
  j.at("prompt_id").get_to(m.prompt_id);
  j.at("score_num").get_to(m.score_num);
  j.at("score_den").get_to(m.score_den);
}

void to_json(nlohmann::json& j, const IterationStats& s) {
  j = nlohmann::json{{"iteration", s.iteration},
                     {"members", s.members},
                     {"mean_score", s.mean_score},
                     {"best_score", s.best_score}};
}

void from_json(const nlohmann::json& j, IterationStats& s) {
  j.at("iteration").get_to(s.iteration);
  j.at("members").get_to(s.members);
  j.at("mean_score").get_to(s.mean_score);
  j.at("best_score").get_to(s.best_score);
}

void write_checkpoint(const fs::path& dir, const Checkpoint& cp) {
  nlohmann::json j{{"iteration", cp.iteration},
                   {"config_fingerprint", cp.config_fingerprint},
                   {"rng_state", cp.rng_state},
                   {"next_serial", cp.next_serial},
                   {"population", cp.population},
                   {"history", cp.history}};
  write_file_atomic(dir / ("iter_" + std::to_string(cp.iteration) + ".json"),
                    j.dump() + "\n");
}

Checkpoint read_checkpoint(const fs::path& file) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(file));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("corrupt checkpoint " + file.string() + ": " + e.what());
  }
  Checkpoint cp;
  try {
    j.at("iteration").get_to(cp.iteration);
    j.at("config_fingerprint").get_to(cp.config_fingerprint);
    j.at("rng_state").get_to(cp.rng_state);
    j.at("next_serial").get_to(cp.next_serial);
    j.at("population").get_to(cp.population);
    j.at("history").get_to(cp.history);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint " + file.string() + ": " + e.what());
  }
  return cp;
}

std::optional<fs::path> latest_checkpoint(const fs::path& dir) {
  std::optional<fs::path> best;
  long best_iter = -1;
  if (!fs::exists(dir)) return std::nullopt;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("iter_", 0) != 0 || entry.path().extension() != ".json") continue;
    try {
      const long iter = std::stol(name.substr(5));
      if (iter > best_iter) {
        best_iter = iter;
        best = entry.path();
      }
    } catch (const std::exception&) {
      continue;  // not one of ours
    }
  }
  return best;
}

std::string config_fingerprint(const EvolveConfig& cfg,
                               const std::vector<Prompt>& seeds,
                               const Dataset& train) {
  std::uint64_t h = fnv1a64("promptevo-run-v1");
  h = fnv1a64_mix(static_cast<std::uint64_t>(cfg.population_size), h);
  h = fnv1a64_mix(cfg.selection_seed, h);
  h = fnv1a64(to_string(cfg.feedback_mode), h);
  h = fnv1a64(to_string(cfg.mutation_mode), h);
  h = fnv1a64_mix(static_cast<std::uint64_t>(cfg.num_clusters), h);
  h = fnv1a64_mix(static_cast<std::uint64_t>(cfg.max_feedback_samples), h);
  h = fnv1a64_mix(static_cast<std::uint64_t>(cfg.child_retry_budget), h);
  h = fnv1a64(to_string(cfg.embed_field), h);
  for (const auto& seed : seeds) h = fnv1a64(trim(seed.text), h);
  h = fnv1a64(train.fingerprint(), h);
  return to_hex(h);
}

namespace {

class Engine {
 public:
  Engine(const EvolveConfig& cfg, const std::vector<Prompt>& seeds,
         const Dataset& train, const AgentBundle& agents,
         EmbeddingProvider& embedder, ScoreCache& cache, fs::path dir)
      : cfg_(cfg),
        seeds_(seeds),
        train_(train),
        agents_(agents),
        embedder_(embedder),
        cache_(cache),
        dir_(std::move(dir)) {
    cfg_.validate();
    if (!agents_.predictor || !agents_.generator) {
      throw ConfigError("predictor and generator agents are required");
    }
    if (cfg_.feedback_mode != FeedbackMode::none && !agents_.analyzer) {
      throw ConfigError("analyzer agent is required unless feedback_mode=none");
    }
    if (static_cast<int>(seeds_.size()) != cfg_.population_size) {
      throw ConfigError("expected " + std::to_string(cfg_.population_size) +
                        " seed prompts, got " + std::to_string(seeds_.size()));
    }
    if (train_.samples.empty()) throw ConfigError("training set is empty");
    fingerprint_ = config_fingerprint(cfg_, seeds_, train_);
  }

  RunResult start() {
    if (latest_checkpoint(dir_)) {
      throw ConfigError("checkpoint directory " + dir_.string() +
                        " already holds a run; resume it or pick a fresh directory");
    }
    fs::create_directories(dir_);
    cache_.attach_log(dir_ / "scores.jsonl");

    state_.rng = Rng(cfg_.selection_seed);
    state_.next_serial = 0;
    pop_.capacity = cfg_.population_size;
    pop_.iteration = 0;
    for (const auto& seed : seeds_) {
      PopulationMember m;
      m.prompt = make_seed_prompt(seed.text, state_);
      if (m.prompt.text.size() > cfg_.prompt_length_warning) {
        std::cerr << "warning: seed prompt has " << m.prompt.text.size()
                  << " characters (threshold " << cfg_.prompt_length_warning << ")\n";
      }
      pop_.members.push_back(std::move(m));
    }

    evaluate_members(0);
    sort_members();
    record_iteration(0);
    rewrite_history_csv();
    checkpoint(0);

    return loop(1);
  }

  RunResult continue_from(const Checkpoint& cp) {
    if (cp.config_fingerprint != fingerprint_) {
      throw ConfigError(
          "checkpoint was produced by a different configuration; refusing to resume");
    }
    fs::create_directories(dir_);
    cache_.attach_log(dir_ / "scores.jsonl");
    cache_.replay_log(dir_ / "scores.jsonl");

    pop_ = cp.population;
    history_ = cp.history;
    state_.rng = rng_from_string(cp.rng_state);
    state_.next_serial = cp.next_serial;
    rewrite_history_csv();

    return loop(cp.iteration + 1);
  }

 private:
  RunResult loop(int first_iteration) {
    for (int t = first_iteration; t <= cfg_.max_iterations; ++t) {
      iterate(t);
    }
    return {pop_, history_};
  }

  void iterate(int t) {
    evaluate_members(t - 1);
    attach_feedback();
    retain_top_k();

    auto child_prompts = generate_children(pop_, *agents_.generator, cfg_, state_);
    std::vector<std::pair<Prompt, FitnessRecord>> children;
    children.reserve(child_prompts.size());
    for (auto& child : child_prompts) {
      FitnessRecord record = score_prompt(child, train_, *agents_.predictor,
                                          cache_, cfg_.eval, t);
      children.emplace_back(std::move(child), std::move(record));
    }

    const Score previous_best = best_score();
    pop_ = elitist_merge(pop_, children, cfg_.population_size);
    const Score new_best = best_score();
    if (score_greater(previous_best, new_best)) {
      throw Error("elitist merge regressed the best fitness at iteration " +
                  std::to_string(t));
    }

    record_iteration(t);
    append_history_csv(history_.back());
    checkpoint(t);
  }

  void evaluate_members(int iteration) {
    for (auto& m : pop_.members) {
      if (m.fitness) continue;
      m.fitness = score_prompt(m.prompt, train_, *agents_.predictor, cache_,
                               cfg_.eval, iteration);
    }
  }

  void attach_feedback() {
    if (cfg_.feedback_mode == FeedbackMode::none) return;
    for (auto& m : pop_.members) {
      if (m.feedback) continue;
      if (!m.fitness) throw Error("feedback requested for unevaluated member");
      if (m.fitness->score.num == m.fitness->score.den) continue;  // perfect

      const auto wrong = wrong_samples(*m.fitness, train_);
      if (wrong.empty()) continue;

      std::vector<std::string> selected;
      int cluster_size = 0;
      if (cfg_.feedback_mode == FeedbackMode::topic) {
        const auto vectors = embed_errors(wrong, embedder_, cfg_.embed_field);
        std::vector<std::string> ids;
        ids.reserve(wrong.size());
        for (const auto& w : wrong) ids.push_back(w.sample.id);
        const auto clusters = cluster_errors(vectors, ids, cfg_.num_clusters,
                                             derived_seed(m.prompt.id, "cluster"));
        std::size_t largest = 0;
        for (const auto& c : clusters) {
          largest = std::max(largest, c.member_ids.size());
        }
        cluster_size = static_cast<int>(largest);
        selected = select_major_cluster(clusters, cfg_.max_feedback_samples,
                                        derived_seed(m.prompt.id, "subsample"));
      } else {
        selected = select_random(wrong, cfg_.max_feedback_samples,
                                 derived_seed(m.prompt.id, "random"));
        cluster_size = static_cast<int>(selected.size());
      }

      std::map<std::string, const WrongCase*> by_id;
      for (const auto& w : wrong) by_id[w.sample.id] = &w;
      std::vector<ErrorCase> cases;
      cases.reserve(selected.size());
      for (const auto& id : selected) {
        const WrongCase* w = by_id.at(id);
        cases.push_back({w->sample.question, w->sample.gold_answer,
                         w->outcome.predicted_answer});
      }

      Feedback fb = agents_.analyzer->analyze(m.prompt.text, cases);
      fb.prompt_id = m.prompt.id;
      fb.source_sample_ids = selected;
      fb.source_cluster_size = cluster_size;
      if (trim(fb.guidance).empty()) {
        throw ProtocolError("analyzer produced empty guidance for prompt " +
                            m.prompt.id);
      }
      m.feedback = std::move(fb);
    }
  }

  // Algorithm step kept literal even though the population already has size K
  // whenever the seed list matches the configured capacity.
  void retain_top_k() {
    sort_members();
    if (static_cast<int>(pop_.members.size()) > cfg_.population_size) {
      pop_.members.resize(static_cast<std::size_t>(cfg_.population_size));
    }
  }

  void sort_members() {
    std::sort(pop_.members.begin(), pop_.members.end(), member_ranks_before);
  }

  Score best_score() const {
    Score best{0, 1};
    bool first = true;
    for (const auto& m : pop_.members) {
      if (first || score_greater(m.fitness->score, best)) {
        best = m.fitness->score;
        first = false;
      }
    }
    return best;
  }

  std::uint64_t derived_seed(const std::string& prompt_id, const char* tag) const {
    std::uint64_t h = fnv1a64_mix(cfg_.selection_seed, fnv1a64(prompt_id));
    return fnv1a64(tag, h);
  }

  void record_iteration(int t) {
    IterationStats stats;
    stats.iteration = t;
    double sum = 0.0;
    double best = 0.0;
    int rank = 0;
    for (const auto& m : pop_.members) {
      MemberStat ms;
      ms.rank = rank++;
      ms.prompt_id = m.prompt.id;
      ms.score_num = m.fitness->score.num;
      ms.score_den = m.fitness->score.den;
      stats.members.push_back(std::move(ms));
      const double v = m.fitness->score.value();
      sum += v;
      best = std::max(best, v);
    }
    stats.mean_score = sum / static_cast<double>(pop_.members.size());
    stats.best_score = best;
    history_.push_back(std::move(stats));
  }

  void rewrite_history_csv() {
    std::string csv = history_csv_header();
    for (const auto& stats : history_) csv += history_csv_rows(stats);
    write_file_atomic(dir_ / "history.csv", csv);
  }

  void append_history_csv(const IterationStats& stats) {
    std::ofstream out(dir_ / "history.csv", std::ios::app);
    if (!out) throw DataError("cannot append to history.csv");
    out << history_csv_rows(stats);
  }

  void checkpoint(int t) {
    Checkpoint cp;
    cp.iteration = t;
    cp.config_fingerprint = fingerprint_;
    cp.rng_state = rng_to_string(state_.rng);
    cp.next_serial = state_.next_serial;
    cp.population = pop_;
    cp.history = history_;
    write_checkpoint(dir_, cp);
  }

  EvolveConfig cfg_;
  std::vector<Prompt> seeds_;
  const Dataset& train_;
  AgentBundle agents_;
  EmbeddingProvider& embedder_;
  ScoreCache& cache_;
  fs::path dir_;
  std::string fingerprint_;
  EngineState state_;
  Population pop_;
  std::vector<IterationStats> history_;
};

}  // namespace

RunResult run(const EvolveConfig& cfg, const std::vector<Prompt>& seeds,
              const Dataset& train, const AgentBundle& agents,
              EmbeddingProvider& embedder, ScoreCache& cache,
              const fs::path& checkpoint_dir) {
  Engine engine(cfg, seeds, train, agents, embedder, cache, checkpoint_dir);
  return engine.start();
}

RunResult resume(const EvolveConfig& cfg, const std::vector<Prompt>& seeds,
                 const Dataset& train, const AgentBundle& agents,
                 EmbeddingProvider& embedder, ScoreCache& cache,
                 const fs::path& checkpoint_dir) {
  const auto file = latest_checkpoint(checkpoint_dir);
  if (!file) {
    throw DataError("no checkpoint found under " + checkpoint_dir.string());
  }
  const Checkpoint cp = read_checkpoint(*file);
  Engine engine(cfg, seeds, train, agents, embedder, cache, checkpoint_dir);
  return engine.continue_from(cp);
}

}  // namespace promptevo
