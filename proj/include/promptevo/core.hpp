#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace promptevo {

enum class TaskKind { numeric, multiple_choice, binary_label, free_text };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& s);

/// A candidate instruction text with identity and lineage. The engine treats
/// the text as opaque.
struct Prompt {
  std::string id;                       // lowercase hex
  std::string text;                     // non-empty after trimming
  int generation = 0;                   // iteration index t >= 0
  std::vector<std::string> parent_ids;  // empty for seeds, two for children

  bool operator==(const Prompt&) const = default;
};

struct Sample {
  std::string id;
  std::string question;
  std::string gold_answer;  // already normalized for its task kind
  TaskKind task_kind = TaskKind::free_text;

  bool operator==(const Sample&) const = default;
};

struct PredictionOutcome {
  std::string sample_id;
  std::string predicted_answer;  // raw predictor output
  std::string extracted_answer;  // normalized token
  bool correct = false;

  bool operator==(const PredictionOutcome&) const = default;
};

// Accuracy kept as an exact integer ratio; rendered as a double on demand.
struct Score {
  std::int64_t num = 0;
  std::int64_t den = 0;

  double value() const { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Score&) const = default;
};

struct FitnessRecord {
  std::string prompt_id;
  Score score;
  std::vector<PredictionOutcome> outcomes;  // one per sample, dataset order
  int evaluated_at = 0;

  bool operator==(const FitnessRecord&) const = default;
};

struct Feedback {
  std::string prompt_id;
  std::string analysis;
  std::string guidance;
  int source_cluster_size = 0;
  std::vector<std::string> source_sample_ids;

  bool operator==(const Feedback&) const = default;
};

struct PopulationMember {
  Prompt prompt;
  std::optional<FitnessRecord> fitness;
  std::optional<Feedback> feedback;

  bool operator==(const PopulationMember&) const = default;
};

struct Population {
  std::vector<PopulationMember> members;
  int capacity = 0;   // K
  int iteration = 0;  // t

  bool operator==(const Population&) const = default;
};

/// Diagnostic check of every Population invariant. Returns one human-readable
/// violation per problem; empty means the population is well-formed.
std::vector<std::string> validate_population(const Population& pop);

// Canonical JSON encoding (snake_case keys, stable key order via nlohmann's
// sorted object map). One object per line when streamed.
void to_json(nlohmann::json& j, const Prompt& p);
void from_json(const nlohmann::json& j, Prompt& p);
void to_json(nlohmann::json& j, const Sample& s);
void from_json(const nlohmann::json& j, Sample& s);
void to_json(nlohmann::json& j, const PredictionOutcome& o);
void from_json(const nlohmann::json& j, PredictionOutcome& o);
void to_json(nlohmann::json& j, const FitnessRecord& r);
void from_json(const nlohmann::json& j, FitnessRecord& r);
void to_json(nlohmann::json& j, const Feedback& f);
void from_json(const nlohmann::json& j, Feedback& f);
void to_json(nlohmann::json& j, const PopulationMember& m);
void from_json(const nlohmann::json& j, PopulationMember& m);
void to_json(nlohmann::json& j, const Population& p);
void from_json(const nlohmann::json& j, Population& p);

}  // namespace promptevo
