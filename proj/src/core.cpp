#include "promptevo/core.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "promptevo/error.hpp"
#include "promptevo/util.hpp"

namespace promptevo {

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::numeric: return "numeric";
    case TaskKind::multiple_choice: return "multiple_choice";
    case TaskKind::binary_label: return "binary_label";
    case TaskKind::free_text: return "free_text";
  }
  throw Error("unknown task kind");
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "numeric") return TaskKind::numeric;
  if (s == "multiple_choice") return TaskKind::multiple_choice;
  if (s == "binary_label") return TaskKind::binary_label;
  if (s == "free_text") return TaskKind::free_text;
  throw ConfigError("unknown task kind: '" + s + "'");
}

std::vector<std::string> validate_population(const Population& pop) {
  std::vector<std::string> violations;

  if (pop.capacity < 2) {
    violations.push_back("capacity must be at least 2, got " +
                         std::to_string(pop.capacity));
  }
  if (pop.iteration < 0) {
    violations.push_back("iteration index is negative");
  }

  const auto size = static_cast<int>(pop.members.size());
  if (pop.capacity >= 2 && size != pop.capacity) {
    violations.push_back("population holds " + std::to_string(size) +
                         " members but capacity is " +
                         std::to_string(pop.capacity) +
                         " (only transient merge states may differ)");
  }
  if (pop.capacity >= 2 && size > 2 * pop.capacity) {
    violations.push_back("population exceeds the 2K transient bound");
  }

  std::set<std::string> seen;
  std::unordered_map<std::string, int> generation_by_id;
  for (const auto& m : pop.members) {
    if (!seen.insert(m.prompt.id).second) {
      violations.push_back("duplicate prompt id: " + m.prompt.id);
    }
    generation_by_id[m.prompt.id] = m.prompt.generation;
  }

  for (const auto& m : pop.members) {
    const auto& p = m.prompt;
    if (trim(p.text).empty()) {
      violations.push_back("prompt " + p.id + " has empty text");
    }
    if (p.generation < 0) {
      violations.push_back("prompt " + p.id + " has negative generation");
    }
    if (!p.parent_ids.empty() && p.parent_ids.size() != 2) {
      violations.push_back("prompt " + p.id + " has " +
                           std::to_string(p.parent_ids.size()) +
                           " parent ids (expected 0 or 2)");
    }
    for (const auto& parent : p.parent_ids) {
      auto it = generation_by_id.find(parent);
      if (it != generation_by_id.end() && it->second >= p.generation) {
        violations.push_back("prompt " + p.id + " parent " + parent +
                             " has generation >= child's");
      }
    }
    if (m.fitness) {
      const auto& r = *m.fitness;
      std::int64_t correct = 0;
      for (const auto& o : r.outcomes) correct += o.correct ? 1 : 0;
      if (!r.outcomes.empty() &&
          (correct != r.score.num ||
           static_cast<std::int64_t>(r.outcomes.size()) != r.score.den)) {
        violations.push_back("prompt " + p.id +
                             " has a fitness score inconsistent with its outcomes");
      }
      if (r.score.den < 0 || r.score.num < 0 || r.score.num > r.score.den) {
        violations.push_back("prompt " + p.id + " has a score outside [0,1]");
      }
    }
    if (m.feedback && m.feedback->source_cluster_size > 0 &&
        trim(m.feedback->guidance).empty()) {
      violations.push_back("prompt " + p.id +
                           " has feedback with empty guidance");
    }
  }

  return violations;
}

void to_json(nlohmann::json& j, const Prompt& p) {
  j = nlohmann::json{{"id", p.id},
                     {"text", p.text},
                     {"generation", p.generation},
                     {"parent_ids", p.parent_ids}};
}

void from_json(const nlohmann::json& j, Prompt& p) {
  j.at("id").get_to(p.id);
  j.at("text").get_to(p.text);
  j.at("generation").get_to(p.generation);
  j.at("parent_ids").get_to(p.parent_ids);
}

void to_json(nlohmann::json& j, const Sample& s) {
  j = nlohmann::json{{"id", s.id},
                     {"question", s.question},
                     {"gold_answer", s.gold_answer},
                     {"task_kind", to_string(s.task_kind)}};
}

void from_json(const nlohmann::json& j, Sample& s) {
  j.at("id").get_to(s.id);
  j.at("question").get_to(s.question);
  j.at("gold_answer").get_to(s.gold_answer);
  s.task_kind = task_kind_from_string(j.at("task_kind").get<std::string>());
}

void to_json(nlohmann::json& j, const PredictionOutcome& o) {
  j = nlohmann::json{{"sample_id", o.sample_id},
                     {"predicted_answer", o.predicted_answer},
                     {"extracted_answer", o.extracted_answer},
                     {"correct", o.correct}};
}

void from_json(const nlohmann::json& j, PredictionOutcome& o) {
  j.at("sample_id").get_to(o.sample_id);
  j.at("predicted_answer").get_to(o.predicted_answer);
  j.at("extracted_answer").get_to(o.extracted_answer);
  j.at("correct").get_to(o.correct);
}

void to_json(nlohmann::json& j, const FitnessRecord& r) {
  j = nlohmann::json{{"prompt_id", r.prompt_id},
                     {"score_num", r.score.num},
                     {"score_den", r.score.den},
                     {"outcomes", r.outcomes},
                     {"evaluated_at", r.evaluated_at}};
}

void from_json(const nlohmann::json& j, FitnessRecord& r) {
  j.at("prompt_id").get_to(r.prompt_id);
  j.at("score_num").get_to(r.score.num);
  j.at("score_den").get_to(r.score.den);
  j.at("outcomes").get_to(r.outcomes);
  j.at("evaluated_at").get_to(r.evaluated_at);
}

void to_json(nlohmann::json& j, const Feedback& f) {
  j = nlohmann::json{{"prompt_id", f.prompt_id},
                     {"analysis", f.analysis},
                     {"guidance", f.guidance},
                     {"source_cluster_size", f.source_cluster_size},
                     {"source_sample_ids", f.source_sample_ids}};
}

void from_json(const nlohmann::json& j, Feedback& f) {
  j.at("prompt_id").get_to(f.prompt_id);
  j.at("analysis").get_to(f.analysis);
  j.at("guidance").get_to(f.guidance);
  j.at("source_cluster_size").get_to(f.source_cluster_size);
  j.at("source_sample_ids").get_to(f.source_sample_ids);
}

void to_json(nlohmann::json& j, const PopulationMember& m) {
  j = nlohmann::json{{"prompt", m.prompt}};
  j["fitness"] = m.fitness ? nlohmann::json(*m.fitness) : nlohmann::json();
  j["feedback"] = m.feedback ? nlohmann::json(*m.feedback) : nlohmann::json();
}

void from_json(const nlohmann::json& j, PopulationMember& m) {
  j.at("prompt").get_to(m.prompt);
  m.fitness.reset();
  m.feedback.reset();
  if (j.contains("fitness") && !j.at("fitness").is_null()) {
    m.fitness = j.at("fitness").get<FitnessRecord>();
  }
  if (j.contains("feedback") && !j.at("feedback").is_null()) {
    m.feedback = j.at("feedback").get<Feedback>();
  }
}

void to_json(nlohmann::json& j, const Population& p) {
  j = nlohmann::json{{"members", p.members},
                     {"capacity", p.capacity},
                     {"iteration", p.iteration}};
}

void from_json(const nlohmann::json& j, Population& p) {
  j.at("members").get_to(p.members);
  j.at("capacity").get_to(p.capacity);
  j.at("iteration").get_to(p.iteration);
}

}  // namespace promptevo
