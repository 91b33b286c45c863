#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "promptevo/agents.hpp"
#include "promptevo/error_topics.hpp"
#include "promptevo/evolve.hpp"

namespace promptevo {

/// Full run configuration: the GA knobs plus dataset, agent endpoints,
/// embedding provider and seed prompts. Backed by a TOML file; every field
/// has a built-in default and command-line flags override file values.
struct RunConfig {
  std::string data_path;
  TaskKind task_kind = TaskKind::free_text;
  double holdout = 0.0;  // 0 disables the split; the whole file is train

  EvolveConfig evolve;

  AgentConfig predictor = AgentConfig::predictor_defaults();
  AgentConfig analyzer = AgentConfig::analyzer_defaults();
  AgentConfig generator = AgentConfig::generator_defaults();
  EmbeddingConfig embedding;

  std::vector<std::string> seed_prompts;  // inline texts
  std::string seed_prompts_file;          // or one prompt per line

  std::string checkpoint_dir = "run";
  std::string templates_dir = "templates";
  int max_in_flight = 8;

  bool operator==(const RunConfig&) const = default;
};

RunConfig parse_run_config(const std::string& toml_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Inverse of parse_run_config: parse(render(cfg)) == cfg.
std::string render_run_config(const RunConfig& cfg);

// The generic, deliberately un-tuned instructions used when a run supplies no
// seed prompts of its own.
const std::vector<std::string>& default_seed_prompts();

// Resolve the K seed texts for a run: inline prompts, then the seed file,
// then the built-in defaults. Throws ConfigError when fewer than K texts are
// available.
std::vector<std::string> resolve_seed_texts(const RunConfig& cfg);

}  // namespace promptevo
