#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "promptevo/core.hpp"

namespace promptevo {

struct AgentConfig {
  std::string endpoint_url;
  std::string model_name;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::string auth_env;  // environment variable holding the bearer token
  std::chrono::milliseconds request_timeout{30000};
  int retry_budget = 3;  // retries after the first attempt
  std::chrono::milliseconds retry_base_delay{500};

  static AgentConfig predictor_defaults();  // temperature 0.0
  static AgentConfig analyzer_defaults();   // temperature 1.0
  static AgentConfig generator_defaults();  // temperature 1.0

  bool operator==(const AgentConfig&) const = default;
};

class PredictorAgent {
 public:
  virtual ~PredictorAgent() = default;
  virtual std::string predict(const std::string& prompt_text,
                              const std::string& question) = 0;
};

struct ErrorCase {
  std::string question;
  std::string gold;
  std::string predicted;
};

class AnalyzerAgent {
 public:
  virtual ~AnalyzerAgent() = default;
  virtual Feedback analyze(const std::string& prompt_text,
                           const std::vector<ErrorCase>& error_cases) = 0;
};

enum class MutationMode { guided, random_mutation };

std::string to_string(MutationMode mode);
MutationMode mutation_mode_from_string(const std::string& s);

class GeneratorAgent {
 public:
  virtual ~GeneratorAgent() = default;
  virtual std::string generate(const Prompt& parent_a, const Prompt& parent_b,
                               const std::optional<Feedback>& feedback_a,
                               const std::optional<Feedback>& feedback_b,
                               MutationMode mode) = 0;
};

// Meta-prompt scaffolds, loaded from editable text assets. Placeholders use
// {name} markers.
struct TemplateSet {
  std::string predictor;
  std::string analyzer;
  std::string generator;

  // Reads templates/{predictor,analyzer,generator}.txt from `dir`.
  static TemplateSet load(const std::filesystem::path& dir);
};

std::string render_predictor_template(const TemplateSet& templates,
                                      const std::string& prompt_text,
                                      const std::string& question,
                                      TaskKind kind);

std::string render_analyzer_template(const TemplateSet& templates,
                                     const std::string& prompt_text,
                                     const std::vector<ErrorCase>& error_cases);

std::string render_generator_template(const TemplateSet& templates,
                                      const Prompt& parent_a,
                                      const Prompt& parent_b,
                                      const std::optional<Feedback>& feedback_a,
                                      const std::optional<Feedback>& feedback_b,
                                      MutationMode mode);

/// Text between the first <prompt>...</prompt> pair, trimmed; the whole
/// trimmed output when no sentinels are present. Throws ProtocolError when
/// the result is empty.
std::string parse_generated_prompt(const std::string& raw);

// Caps the number of requests in flight across every agent role sharing one
// provider budget.
class RateGate {
 public:
  explicit RateGate(int max_in_flight);

  class Ticket {
   public:
    explicit Ticket(RateGate* gate);
    ~Ticket();
    Ticket(Ticket&& other) noexcept : gate_(other.gate_) { other.gate_ = nullptr; }
    Ticket(const Ticket&) = delete;
    Ticket& operator=(const Ticket&) = delete;
    Ticket& operator=(Ticket&&) = delete;

   private:
    RateGate* gate_;
  };

  Ticket acquire() { return Ticket(this); }

 private:
  friend class Ticket;
  void enter();
  void leave();

  std::mutex mu_;
  std::condition_variable cv_;
  int available_;
};

/// Single-turn chat completion over the generic JSON wire format. Retries
/// with exponential backoff on 429/5xx and transport failures up to the
/// config's retry budget.
std::string chat_complete(const AgentConfig& cfg, const std::string& message,
                          RateGate* gate = nullptr);

// HTTP-backed role agents built on chat_complete.
class HttpPredictor : public PredictorAgent {
 public:
  HttpPredictor(AgentConfig cfg, TemplateSet templates, TaskKind kind,
                RateGate* gate = nullptr);
  std::string predict(const std::string& prompt_text,
                      const std::string& question) override;

 private:
  AgentConfig cfg_;
  TemplateSet templates_;
  TaskKind kind_;
  RateGate* gate_;
};

class HttpAnalyzer : public AnalyzerAgent {
 public:
  HttpAnalyzer(AgentConfig cfg, TemplateSet templates, RateGate* gate = nullptr);
  Feedback analyze(const std::string& prompt_text,
                   const std::vector<ErrorCase>& error_cases) override;

 private:
  AgentConfig cfg_;
  TemplateSet templates_;
  RateGate* gate_;
};

class HttpGenerator : public GeneratorAgent {
 public:
  HttpGenerator(AgentConfig cfg, TemplateSet templates, RateGate* gate = nullptr);
  std::string generate(const Prompt& parent_a, const Prompt& parent_b,
                       const std::optional<Feedback>& feedback_a,
                       const std::optional<Feedback>& feedback_b,
                       MutationMode mode) override;

 private:
  AgentConfig cfg_;
  TemplateSet templates_;
  RateGate* gate_;
};

// Splits the analyzer's free-form reply into analysis and guidance using the
// ANALYSIS:/GUIDANCE: markers the template asks for. Falls back to treating
// the whole reply as guidance so the Feedback invariant holds.
Feedback parse_analyzer_reply(const std::string& raw,
                              const std::string& prompt_id,
                              const std::vector<std::string>& sample_ids,
                              int cluster_size);

}  // namespace promptevo
