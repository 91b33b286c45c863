#include "promptevo/agents.hpp"

#include <utility>

#include "promptevo/error.hpp"
#include "promptevo/util.hpp"

namespace promptevo {

AgentConfig AgentConfig::predictor_defaults() {
  AgentConfig cfg;
  cfg.temperature = 0.0;
  return cfg;
}

AgentConfig AgentConfig::analyzer_defaults() {
  AgentConfig cfg;
  cfg.temperature = 1.0;
  return cfg;
}

AgentConfig AgentConfig::generator_defaults() {
  AgentConfig cfg;
  cfg.temperature = 1.0;
  return cfg;
}

std::string to_string(MutationMode mode) {
  switch (mode) {
    case MutationMode::guided: return "guided";
    case MutationMode::random_mutation: return "random";
  }
  throw Error("unknown mutation mode");
}

MutationMode mutation_mode_from_string(const std::string& s) {
  if (s == "guided") return MutationMode::guided;
  if (s == "random" || s == "random_mutation") return MutationMode::random_mutation;
  throw ConfigError("unknown mutation mode: '" + s + "'");
}

namespace {

std::string replace_all(std::string text, std::string_view marker,
                        std::string_view value) {
  std::size_t pos = 0;
  while ((pos = text.find(marker, pos)) != std::string::npos) {
    text.replace(pos, marker.size(), value);
    pos += value.size();
  }
  return text;
}

void require_placeholders(const std::string& text, const char* name,
                          std::initializer_list<const char*> markers) {
  for (const char* marker : markers) {
    if (text.find(marker) == std::string::npos) {
      throw ConfigError(std::string("template '") + name +
                        "' is missing the " + marker + " placeholder");
    }
  }
}

// Answer-format instructions matched to the extract_answer rules.
std::string format_instruction(TaskKind kind) {
  switch (kind) {
    case TaskKind::numeric:
      return "Work through the problem step by step, then end your response "
             "with the final numeric answer.";
    case TaskKind::multiple_choice:
      return "End your response with the single letter of the chosen option.";
    case TaskKind::binary_label:
      return "End your response with 'yes' or 'no'.";
    case TaskKind::free_text:
      return "End your response with the final answer.";
  }
  throw Error("unknown task kind");
}

}  // namespace

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
  TemplateSet set;
  set.predictor = read_file(dir / "predictor.txt");
  set.analyzer = read_file(dir / "analyzer.txt");
  set.generator = read_file(dir / "generator.txt");
  require_placeholders(set.predictor, "predictor",
                       {"{prompt}", "{question}", "{format_instruction}"});
  require_placeholders(set.analyzer, "analyzer", {"{prompt}", "{error_cases}"});
  require_placeholders(set.generator, "generator",
                       {"{parent_a}", "{parent_b}", "{feedback_section}",
                        "{mutation_instruction}"});
  return set;
}

std::string render_predictor_template(const TemplateSet& templates,
                                      const std::string& prompt_text,
                                      const std::string& question,
                                      TaskKind kind) {
  if (trim(prompt_text).empty()) throw Error("predictor render: empty prompt");
  if (trim(question).empty()) throw Error("predictor render: empty question");
  std::string out = replace_all(templates.predictor, "{prompt}", prompt_text);
  out = replace_all(out, "{question}", question);
  out = replace_all(out, "{format_instruction}", format_instruction(kind));
  return out;
}

std::string render_analyzer_template(const TemplateSet& templates,
                                     const std::string& prompt_text,
                                     const std::vector<ErrorCase>& error_cases) {
  if (error_cases.empty()) throw Error("analyzer render: no error cases");
  std::string cases;
  for (std::size_t i = 0; i < error_cases.size(); ++i) {
    const auto& c = error_cases[i];
    cases += "Case " + std::to_string(i + 1) + ":\n";
    cases += "  Question: " + c.question + "\n";
    cases += "  Expected answer: " + c.gold + "\n";
    cases += "  Model answer: " + c.predicted + "\n";
  }
  std::string out = replace_all(templates.analyzer, "{prompt}", prompt_text);
  out = replace_all(out, "{error_cases}", cases);
  return out;
}

std::string render_generator_template(const TemplateSet& templates,
                                      const Prompt& parent_a,
                                      const Prompt& parent_b,
                                      const std::optional<Feedback>& feedback_a,
                                      const std::optional<Feedback>& feedback_b,
                                      MutationMode mode) {
  if (trim(parent_a.text).empty() || trim(parent_b.text).empty()) {
    throw Error("generator render: empty parent prompt");
  }

  std::string feedback_section;
  std::string mutation_instruction;
  if (mode == MutationMode::guided) {
    feedback_section += "Feedback on parent A:\n";
    feedback_section += feedback_a ? feedback_a->guidance : "(none)";
    feedback_section += "\n\nFeedback on parent B:\n";
    feedback_section += feedback_b ? feedback_b->guidance : "(none)";
    feedback_section += "\n\n";
    mutation_instruction =
        "revise the child prompt so it directly addresses the feedback above.";
  } else {
    mutation_instruction =
        "rephrase the child prompt, keeping its meaning unchanged.";
  }

  std::string out = replace_all(templates.generator, "{parent_a}", parent_a.text);
  out = replace_all(out, "{parent_b}", parent_b.text);
  out = replace_all(out, "{feedback_section}", feedback_section);
  out = replace_all(out, "{mutation_instruction}", mutation_instruction);
  return out;
}

std::string parse_generated_prompt(const std::string& raw) {
  static constexpr std::string_view open = "<prompt>";
  static constexpr std::string_view close = "</prompt>";

  std::string candidate;
  const auto start = raw.find(open);
  if (start != std::string::npos) {
    const auto body_start = start + open.size();
    const auto end = raw.find(close, body_start);
    // A missing close tag usually means the output was truncated; keep what
    // is there rather than discarding the generation.
    candidate = end != std::string::npos
                    ? raw.substr(body_start, end - body_start)
                    : raw.substr(body_start);
  } else {
    candidate = raw;  // no sentinels at all: take the whole output
  }
  candidate = trim(candidate);
  if (candidate.empty()) {
    throw ProtocolError("generator output contains no prompt text");
  }
  return candidate;
}

RateGate::RateGate(int max_in_flight) : available_(max_in_flight) {
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
}

RateGate::Ticket::Ticket(RateGate* gate) : gate_(gate) { gate_->enter(); }
RateGate::Ticket::~Ticket() {
  if (gate_) gate_->leave();
}

void RateGate::enter() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return available_ > 0; });
  --available_;
}

void RateGate::leave() {
  std::lock_guard lock(mu_);
  ++available_;
  cv_.notify_one();
}

Feedback parse_analyzer_reply(const std::string& raw,
                              const std::string& prompt_id,
                              const std::vector<std::string>& sample_ids,
                              int cluster_size) {
  Feedback fb;
  fb.prompt_id = prompt_id;
  fb.source_sample_ids = sample_ids;
  fb.source_cluster_size = cluster_size;

  const auto analysis_pos = raw.find("ANALYSIS:");
  const auto guidance_pos = raw.find("GUIDANCE:");
  if (guidance_pos != std::string::npos) {
    fb.guidance = trim(raw.substr(guidance_pos + 9));
    if (analysis_pos != std::string::npos && analysis_pos < guidance_pos) {
      fb.analysis = trim(raw.substr(analysis_pos + 9, guidance_pos - analysis_pos - 9));
    }
  }
  if (fb.guidance.empty()) fb.guidance = trim(raw);
  if (fb.guidance.empty()) {
    throw ProtocolError("analyzer returned an empty reply");
  }
  return fb;
}

HttpPredictor::HttpPredictor(AgentConfig cfg, TemplateSet templates,
                             TaskKind kind, RateGate* gate)
    : cfg_(std::move(cfg)), templates_(std::move(templates)), kind_(kind), gate_(gate) {}

std::string HttpPredictor::predict(const std::string& prompt_text,
                                   const std::string& question) {
  return chat_complete(
      cfg_, render_predictor_template(templates_, prompt_text, question, kind_),
      gate_);
}

HttpAnalyzer::HttpAnalyzer(AgentConfig cfg, TemplateSet templates, RateGate* gate)
    : cfg_(std::move(cfg)), templates_(std::move(templates)), gate_(gate) {}

Feedback HttpAnalyzer::analyze(const std::string& prompt_text,
                               const std::vector<ErrorCase>& error_cases) {
  const std::string reply = chat_complete(
      cfg_, render_analyzer_template(templates_, prompt_text, error_cases), gate_);
  // prompt_id / sample ids are filled in by the engine, which knows them.
  return parse_analyzer_reply(reply, "", {}, 0);
}

HttpGenerator::HttpGenerator(AgentConfig cfg, TemplateSet templates, RateGate* gate)
    : cfg_(std::move(cfg)), templates_(std::move(templates)), gate_(gate) {}

std::string HttpGenerator::generate(const Prompt& parent_a,
                                    const Prompt& parent_b,
                                    const std::optional<Feedback>& feedback_a,
                                    const std::optional<Feedback>& feedback_b,
                                    MutationMode mode) {
  const std::string message = render_generator_template(
      templates_, parent_a, parent_b, feedback_a, feedback_b, mode);
  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.retry_budget; ++attempt) {
    const std::string reply = chat_complete(cfg_, message, gate_);
    try {
      return parse_generated_prompt(reply);
    } catch (const ProtocolError& e) {
      last_error = e.what();  // empty generation; ask again
    }
  }
  throw ProtocolError("generator kept returning empty prompts: " + last_error);
}

}  // namespace promptevo
