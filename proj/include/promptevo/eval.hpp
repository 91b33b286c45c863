#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "promptevo/agents.hpp"
#include "promptevo/core.hpp"
#include "promptevo/dataset.hpp"

namespace promptevo {

/// Pull the comparable answer token out of raw predictor output.
///   numeric          last number, commas/currency stripped, no trailing ".0"
///   multiple_choice  last standalone option letter a-e, lowercased
///   binary_label     "yes"/"no" from the last affirmation/negation keyword
///   free_text        trimmed, lowercased full string
/// Returns "" when nothing extractable is present.
std::string extract_answer(std::string_view raw, TaskKind kind);

struct EvalOptions {
  int parallelism = 1;
  int retry_budget = 2;  // per-sample retries before marking failure
  std::chrono::milliseconds retry_base_delay{250};
  double abort_error_fraction = 0.2;  // > this fraction of failures aborts

  bool operator==(const EvalOptions&) const = default;
};

/// Memoizes fitness records per (prompt id, dataset fingerprint). Concurrent
/// requests for the same key coalesce into a single computation. Optionally
/// persists every new record to an append-only JSONL file so a run can be
/// resumed by replaying it.
class ScoreCache {
 public:
  ScoreCache() = default;

  std::optional<FitnessRecord> get(const std::string& prompt_id,
                                   const std::string& dataset_fingerprint) const;

  // Returns the cached record or runs `compute` exactly once per key.
  FitnessRecord get_or_compute(const std::string& prompt_id,
                               const std::string& dataset_fingerprint,
                               const std::function<FitnessRecord()>& compute);

  // Enables persistence; future inserts are appended to `path`.
  void attach_log(const std::filesystem::path& path);
  // Loads previously persisted records. Unknown or duplicate keys are kept
  // first-wins, matching append-order replay.
  void replay_log(const std::filesystem::path& path);

  std::size_t size() const;

 private:
  struct Entry;
  std::string key(const std::string& prompt_id,
                  const std::string& fingerprint) const;
  void persist_locked(const std::string& fingerprint,
                      const FitnessRecord& record);

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, std::shared_ptr<Entry>> entries_;
  std::filesystem::path log_path_;
};

/// Evaluate one prompt over the full dataset with the predictor. Outcomes are
/// computed up to `parallelism` samples at a time and sealed in dataset order,
/// so the record is identical regardless of thread count. A sample whose
/// predictor call still fails after the retry budget counts as incorrect with
/// an error marker in predicted_answer; if more than abort_error_fraction of
/// the dataset fails that way the evaluation throws EvalError instead.
FitnessRecord score_prompt(const Prompt& prompt, const Dataset& ds,
                           PredictorAgent& predictor, ScoreCache& cache,
                           const EvalOptions& options = {},
                           int evaluated_at = 0);

struct WrongCase {
  Sample sample;
  PredictionOutcome outcome;
};

/// The incorrect outcomes of `record`, paired with their samples, in dataset
/// order.
std::vector<WrongCase> wrong_samples(const FitnessRecord& record,
                                     const Dataset& ds);

}  // namespace promptevo
