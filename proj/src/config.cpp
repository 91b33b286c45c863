#include "promptevo/config.hpp"

#include <fstream>
#include <set>

#include "promptevo/error.hpp"
#include "promptevo/toml.hpp"
#include "promptevo/util.hpp"

namespace promptevo {

namespace {

struct Reader {
  const toml::Table& table;
  std::set<std::string> consumed;

  template <typename T>
  void read(const std::string& section, const std::string& key, T& out) {
    const toml::Value* value = table.find(section, key);
    if (!value) return;
    consumed.insert(section + "." + key);
    if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::uint64_t> ||
                  std::is_same_v<T, std::int64_t>) {
      if (const auto* v = std::get_if<std::int64_t>(value)) {
        out = static_cast<T>(*v);
        return;
      }
    } else if constexpr (std::is_same_v<T, double>) {
      if (const auto* v = std::get_if<double>(value)) {
        out = *v;
        return;
      }
      if (const auto* v = std::get_if<std::int64_t>(value)) {
        out = static_cast<double>(*v);
        return;
      }
    } else {
      if (const auto* v = std::get_if<T>(value)) {
        out = *v;
        return;
      }
    }
    throw ConfigError("field [" + section + "] " + key + " has the wrong type");
  }

  void read_ms(const std::string& section, const std::string& key,
               std::chrono::milliseconds& out) {
    std::int64_t ms = out.count();
    read(section, key, ms);
    out = std::chrono::milliseconds(ms);
  }

  void reject_unknown() const {
    for (const auto& [section, keys] : table.sections) {
      for (const auto& [key, value] : keys) {
        (void)value;
        if (!consumed.count(section + "." + key)) {
          throw ConfigError("unknown config field [" + section + "] " + key);
        }
      }
    }
  }
};

void read_agent(Reader& r, const std::string& section, AgentConfig& cfg) {
  r.read(section, "endpoint_url", cfg.endpoint_url);
  r.read(section, "model", cfg.model_name);
  r.read(section, "temperature", cfg.temperature);
  r.read(section, "max_output_tokens", cfg.max_output_tokens);
  r.read(section, "auth_env", cfg.auth_env);
  r.read_ms(section, "timeout_ms", cfg.request_timeout);
  r.read(section, "retry_budget", cfg.retry_budget);
  r.read_ms(section, "retry_base_delay_ms", cfg.retry_base_delay);
}

void write_agent(toml::Table& t, const std::string& section,
                 const AgentConfig& cfg) {
  auto& s = t.sections[section];
  s["endpoint_url"] = cfg.endpoint_url;
  s["model"] = cfg.model_name;
  s["temperature"] = cfg.temperature;
  s["max_output_tokens"] = static_cast<std::int64_t>(cfg.max_output_tokens);
  s["auth_env"] = cfg.auth_env;
  s["timeout_ms"] = static_cast<std::int64_t>(cfg.request_timeout.count());
  s["retry_budget"] = static_cast<std::int64_t>(cfg.retry_budget);
  s["retry_base_delay_ms"] =
      static_cast<std::int64_t>(cfg.retry_base_delay.count());
}

}  // namespace

RunConfig parse_run_config(const std::string& toml_text) {
  const toml::Table table = toml::parse(toml_text);
  Reader r{table, {}};
  RunConfig cfg;

  std::string task_kind = to_string(cfg.task_kind);
  std::string feedback_mode = to_string(cfg.evolve.feedback_mode);
  std::string mutation_mode = to_string(cfg.evolve.mutation_mode);
  std::string embed_field = to_string(cfg.evolve.embed_field);

  r.read("run", "data", cfg.data_path);
  r.read("run", "task_kind", task_kind);
  r.read("run", "holdout", cfg.holdout);
  r.read("run", "population_size", cfg.evolve.population_size);
  r.read("run", "max_iterations", cfg.evolve.max_iterations);
  r.read("run", "seed", cfg.evolve.selection_seed);
  r.read("run", "feedback_mode", feedback_mode);
  r.read("run", "mutation_mode", mutation_mode);
  r.read("run", "num_clusters", cfg.evolve.num_clusters);
  r.read("run", "max_feedback_samples", cfg.evolve.max_feedback_samples);
  r.read("run", "child_retry_budget", cfg.evolve.child_retry_budget);
  r.read("run", "embed_field", embed_field);
  r.read("run", "parallelism", cfg.evolve.eval.parallelism);
  r.read("run", "seed_prompts", cfg.seed_prompts);
  r.read("run", "seed_prompts_file", cfg.seed_prompts_file);
  r.read("run", "checkpoint_dir", cfg.checkpoint_dir);
  r.read("run", "templates_dir", cfg.templates_dir);
  r.read("run", "max_in_flight", cfg.max_in_flight);

  cfg.task_kind = task_kind_from_string(task_kind);
  cfg.evolve.feedback_mode = feedback_mode_from_string(feedback_mode);
  cfg.evolve.mutation_mode = mutation_mode_from_string(mutation_mode);
  cfg.evolve.embed_field = embed_field_from_string(embed_field);

  read_agent(r, "predictor", cfg.predictor);
  read_agent(r, "analyzer", cfg.analyzer);
  read_agent(r, "generator", cfg.generator);

  r.read("embedding", "endpoint_url", cfg.embedding.endpoint_url);
  r.read("embedding", "model", cfg.embedding.model_name);
  r.read("embedding", "auth_env", cfg.embedding.auth_env);
  r.read_ms("embedding", "timeout_ms", cfg.embedding.request_timeout);
  r.read("embedding", "retry_budget", cfg.embedding.retry_budget);
  r.read_ms("embedding", "retry_base_delay_ms", cfg.embedding.retry_base_delay);

  r.reject_unknown();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_file(path));
}

std::string render_run_config(const RunConfig& cfg) {
  toml::Table t;
  auto& run = t.sections["run"];
  run["data"] = cfg.data_path;
  run["task_kind"] = to_string(cfg.task_kind);
  run["holdout"] = cfg.holdout;
  run["population_size"] = static_cast<std::int64_t>(cfg.evolve.population_size);
  run["max_iterations"] = static_cast<std::int64_t>(cfg.evolve.max_iterations);
  run["seed"] = static_cast<std::int64_t>(cfg.evolve.selection_seed);
  run["feedback_mode"] = to_string(cfg.evolve.feedback_mode);
  run["mutation_mode"] = to_string(cfg.evolve.mutation_mode);
  run["num_clusters"] = static_cast<std::int64_t>(cfg.evolve.num_clusters);
  run["max_feedback_samples"] =
      static_cast<std::int64_t>(cfg.evolve.max_feedback_samples);
  run["child_retry_budget"] =
      static_cast<std::int64_t>(cfg.evolve.child_retry_budget);
  run["embed_field"] = to_string(cfg.evolve.embed_field);
  run["parallelism"] = static_cast<std::int64_t>(cfg.evolve.eval.parallelism);
  run["seed_prompts"] = cfg.seed_prompts;
  run["seed_prompts_file"] = cfg.seed_prompts_file;
  run["checkpoint_dir"] = cfg.checkpoint_dir;
  run["templates_dir"] = cfg.templates_dir;
  run["max_in_flight"] = static_cast<std::int64_t>(cfg.max_in_flight);

  write_agent(t, "predictor", cfg.predictor);
  write_agent(t, "analyzer", cfg.analyzer);
  write_agent(t, "generator", cfg.generator);

  auto& emb = t.sections["embedding"];
  emb["endpoint_url"] = cfg.embedding.endpoint_url;
  emb["model"] = cfg.embedding.model_name;
  emb["auth_env"] = cfg.embedding.auth_env;
  emb["timeout_ms"] =
      static_cast<std::int64_t>(cfg.embedding.request_timeout.count());
  emb["retry_budget"] = static_cast<std::int64_t>(cfg.embedding.retry_budget);
  emb["retry_base_delay_ms"] =
      static_cast<std::int64_t>(cfg.embedding.retry_base_delay.count());

  return toml::render(t);
}

const std::vector<std::string>& default_seed_prompts() {
  static const std::vector<std::string> seeds = {
      "Answer the question.",
      "Read the question carefully and answer it.",
      "Think about the question, then give your answer.",
      "Provide the best answer to the question below.",
      "Consider the question and respond with your answer.",
      "Answer the following question as well as you can.",
      "Give a clear answer to the question.",
      "Work out the answer to the question and state it.",
  };
  return seeds;
}

std::vector<std::string> resolve_seed_texts(const RunConfig& cfg) {
  std::vector<std::string> texts = cfg.seed_prompts;
  if (texts.empty() && !cfg.seed_prompts_file.empty()) {
    std::ifstream in(cfg.seed_prompts_file);
    if (!in) {
      throw ConfigError("cannot open seed prompts file: " + cfg.seed_prompts_file);
    }
    std::string line;
    while (std::getline(in, line)) {
      if (!trim(line).empty()) texts.push_back(trim(line));
    }
  }
  if (texts.empty()) texts = default_seed_prompts();

  const auto k = static_cast<std::size_t>(cfg.evolve.population_size);
  if (texts.size() < k) {
    throw ConfigError("need " + std::to_string(k) + " seed prompts, have " +
                      std::to_string(texts.size()));
  }
  texts.resize(k);
  return texts;
}

}  // namespace promptevo
