#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "promptevo/agents.hpp"
#include "promptevo/core.hpp"
#include "promptevo/dataset.hpp"
#include "promptevo/error_topics.hpp"
#include "promptevo/eval.hpp"
#include "promptevo/util.hpp"

namespace promptevo {

enum class FeedbackMode { topic, random_sample, none };

std::string to_string(FeedbackMode mode);
FeedbackMode feedback_mode_from_string(const std::string& s);

struct EvolveConfig {
  int population_size = 4;   // K
  int max_iterations = 20;   // T
  std::uint64_t selection_seed = 0;
  FeedbackMode feedback_mode = FeedbackMode::topic;
  MutationMode mutation_mode = MutationMode::guided;
  int num_clusters = 3;
  int max_feedback_samples = 5;
  int child_retry_budget = 3;
  EmbedField embed_field = EmbedField::gold;
  EvalOptions eval;
  std::size_t prompt_length_warning = 8000;

  // Throws ConfigError on violated invariants. feedback_mode=none requires
  // mutation_mode=random_mutation: there is no feedback to guide mutations.
  void validate() const;

  bool operator==(const EvolveConfig&) const = default;
};

/// Roulette-wheel probabilities e_k = f_k / sum(f). A zero-sum fitness list
/// falls back to uniform so a fresh population with all-zero scores can still
/// select parents. Negative fitness is a caller bug and throws.
std::vector<double> selection_probabilities(const std::vector<double>& fitness);

/// Two roulette draws over the population; the second is redrawn until it
/// differs from the first (bounded, then the best distinct member is taken).
/// Requires every member evaluated.
std::pair<std::size_t, std::size_t> select_parents(const Population& pop,
                                                   Rng& rng);

// Engine randomness plus the serial counter that makes prompt ids unique.
// Serialized into checkpoints so a resumed run continues the exact stream.
struct EngineState {
  Rng rng;
  std::uint64_t next_serial = 0;
};

Prompt make_child_prompt(const std::string& text, int generation,
                         const std::string& parent_a_id,
                         const std::string& parent_b_id, EngineState& state);

/// One generation step: K children, each from two roulette-selected parents
/// via the generator agent. A child whose text duplicates an existing member
/// is regenerated up to child_retry_budget times, then accepted as-is.
std::vector<Prompt> generate_children(const Population& pop,
                                      GeneratorAgent& generator,
                                      const EvolveConfig& cfg,
                                      EngineState& state);

/// Keep the K best of current members plus evaluated children. Ties go to the
/// earlier generation, then the lower prompt id, so incumbents win ties.
/// Advances the iteration index by one.
Population elitist_merge(const Population& current,
                         const std::vector<std::pair<Prompt, FitnessRecord>>& children,
                         int k);

struct MemberStat {
  int rank = 0;  // 0 = best
  std::string prompt_id;
  std::int64_t score_num = 0;
  std::int64_t score_den = 0;
};

struct IterationStats {
  int iteration = 0;
  std::vector<MemberStat> members;
  double mean_score = 0.0;
  double best_score = 0.0;
};

struct RunResult {
  Population population;
  std::vector<IterationStats> history;  // initial snapshot + one per iteration
};

struct AgentBundle {
  PredictorAgent* predictor = nullptr;
  AnalyzerAgent* analyzer = nullptr;
  GeneratorAgent* generator = nullptr;
};

// Checkpoint directory layout:
//   iter_<t>.json   population + rng state + config fingerprint + history
//   scores.jsonl    append-only fitness records (via ScoreCache)
//   history.csv     iteration,member_rank,prompt_id,score_num,score_den,
//                   mean_score,best_score
struct Checkpoint {
  int iteration = 0;
  std::string config_fingerprint;
  std::string rng_state;
  std::uint64_t next_serial = 0;
  Population population;
  std::vector<IterationStats> history;
};

void write_checkpoint(const std::filesystem::path& dir, const Checkpoint& cp);
Checkpoint read_checkpoint(const std::filesystem::path& file);
// Highest-iteration iter_<t>.json in the directory, if any.
std::optional<std::filesystem::path> latest_checkpoint(
    const std::filesystem::path& dir);

std::string history_csv_header();
std::string history_csv_rows(const IterationStats& stats);

// Fingerprint of everything that pins a run's trajectory (population size,
// seeds, modes, engine seed, dataset). max_iterations is deliberately not
// included: resuming with a larger T continues the same run.
std::string config_fingerprint(const EvolveConfig& cfg,
                               const std::vector<Prompt>& seeds,
                               const Dataset& train);

/// The full optimization loop. Evaluates whatever is unevaluated, collects
/// feedback per feedback_mode, retains the top K, generates K children,
/// evaluates them, and merges elitist-style, checkpointing after every
/// iteration. Returns the final population and per-iteration history.
RunResult run(const EvolveConfig& cfg, const std::vector<Prompt>& seeds,
              const Dataset& train, const AgentBundle& agents,
              EmbeddingProvider& embedder, ScoreCache& cache,
              const std::filesystem::path& checkpoint_dir);

/// Continue an interrupted run from its latest checkpoint. The restored state
/// includes the RNG stream, so the continuation is identical to a run that
/// was never interrupted.
RunResult resume(const EvolveConfig& cfg, const std::vector<Prompt>& seeds,
                 const Dataset& train, const AgentBundle& agents,
                 EmbeddingProvider& embedder, ScoreCache& cache,
                 const std::filesystem::path& checkpoint_dir);

Prompt make_seed_prompt(const std::string& text, EngineState& state);

}  // namespace promptevo
