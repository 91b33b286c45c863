#include "promptevo/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "promptevo/error.hpp"
#include "promptevo/util.hpp"

namespace promptevo {

namespace fs = std::filesystem;

Backends make_http_backends(const RunConfig& cfg) {
  if (cfg.predictor.endpoint_url.empty()) {
    throw ConfigError("[predictor] endpoint_url is required");
  }
  const bool needs_feedback = cfg.evolve.feedback_mode != FeedbackMode::none;
  if (needs_feedback && cfg.analyzer.endpoint_url.empty()) {
    throw ConfigError("[analyzer] endpoint_url is required unless feedback_mode=none");
  }
  if (cfg.generator.endpoint_url.empty()) {
    throw ConfigError("[generator] endpoint_url is required");
  }

  Backends b;
  b.gate = std::make_shared<RateGate>(cfg.max_in_flight);
  const TemplateSet templates = TemplateSet::load(cfg.templates_dir);
  b.predictor = std::make_shared<HttpPredictor>(cfg.predictor, templates,
                                                cfg.task_kind, b.gate.get());
  if (needs_feedback) {
    b.analyzer = std::make_shared<HttpAnalyzer>(cfg.analyzer, templates, b.gate.get());
  }
  b.generator = std::make_shared<HttpGenerator>(cfg.generator, templates, b.gate.get());
  if (cfg.embedding.endpoint_url.empty()) {
    // No embedding endpoint configured: fall back to the local hash embedder.
    b.embedder = std::make_shared<HashNgramEmbedder>();
  } else {
    b.embedder = std::make_shared<HttpEmbeddingProvider>(cfg.embedding, b.gate.get());
  }
  return b;
}

namespace {

struct CliOverrides {
  std::string config_path;
  std::string data;
  std::string task_kind;
  int population_size = 0;
  int max_iterations = 0;
  std::string feedback_mode;
  std::string mutation_mode;
  std::uint64_t seed = 0;
  std::string checkpoint_dir;
  int parallelism = 0;
  double holdout = 0.0;
  std::string resume_dir;
};

void add_common_options(CLI::App* cmd, CliOverrides& o) {
  cmd->add_option("--config", o.config_path, "TOML run configuration file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--data", o.data, "dataset file (JSONL with question/answer)");
  cmd->add_option("--task-kind", o.task_kind, "answer comparison rules")
      ->check(CLI::IsMember({"numeric", "multiple_choice", "binary_label", "free_text"}));
  cmd->add_option("--population-size", o.population_size, "population size K");
  cmd->add_option("--max-iterations", o.max_iterations, "iteration budget T");
  cmd->add_option("--feedback-mode", o.feedback_mode, "wrong-sample selection")
      ->check(CLI::IsMember({"topic", "random_sample", "none"}));
  cmd->add_option("--mutation-mode", o.mutation_mode, "child mutation style")
      ->check(CLI::IsMember({"guided", "random"}));
  cmd->add_option("--seed", o.seed, "engine seed");
  cmd->add_option("--checkpoint-dir", o.checkpoint_dir, "run directory");
  cmd->add_option("--parallelism", o.parallelism, "concurrent predictor calls");
  cmd->add_option("--holdout", o.holdout, "test fraction in (0,1); 0 disables");
}

// Flag > config file > built-in default.
RunConfig build_config(const CLI::App* cmd, const CliOverrides& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_run_config(o.config_path);
  if (cmd->count("--data")) cfg.data_path = o.data;
  if (cmd->count("--task-kind")) cfg.task_kind = task_kind_from_string(o.task_kind);
  if (cmd->count("--population-size")) cfg.evolve.population_size = o.population_size;
  if (cmd->count("--max-iterations")) cfg.evolve.max_iterations = o.max_iterations;
  if (cmd->count("--feedback-mode")) {
    cfg.evolve.feedback_mode = feedback_mode_from_string(o.feedback_mode);
  }
  if (cmd->count("--mutation-mode")) {
    cfg.evolve.mutation_mode = mutation_mode_from_string(o.mutation_mode);
  }
  if (cmd->count("--seed")) cfg.evolve.selection_seed = o.seed;
  if (cmd->count("--checkpoint-dir")) cfg.checkpoint_dir = o.checkpoint_dir;
  if (cmd->count("--parallelism")) cfg.evolve.eval.parallelism = o.parallelism;
  if (cmd->count("--holdout")) cfg.holdout = o.holdout;
  return cfg;
}

Dataset load_train_split(const RunConfig& cfg, const std::string& wanted = "train") {
  if (cfg.data_path.empty()) throw ConfigError("no dataset given (--data or [run] data)");
  if (!fs::exists(cfg.data_path)) {
    throw DataError("dataset file does not exist: " + cfg.data_path);
  }
  Dataset full = load_dataset(cfg.data_path, cfg.task_kind, "train");
  if (cfg.holdout <= 0.0) {
    full.split = wanted;
    return full;
  }
  auto [train, test] = split_holdout(full, cfg.holdout, cfg.evolve.selection_seed);
  return wanted == "test" ? test : train;
}

std::vector<Prompt> seeds_from_texts(const std::vector<std::string>& texts) {
  std::vector<Prompt> seeds;
  seeds.reserve(texts.size());
  for (const auto& text : texts) {
    Prompt p;
    p.text = text;  // ids are assigned by the engine
    seeds.push_back(std::move(p));
  }
  return seeds;
}

Backends build_backends(const RunConfig& cfg, const BackendFactory* factory) {
  if (factory && *factory) return (*factory)(cfg);
  return make_http_backends(cfg);
}

void print_iteration(const IterationStats& stats) {
  std::printf("iter %3d  best %.4f  mean %.4f\n", stats.iteration,
              stats.best_score, stats.mean_score);
}

int cmd_optimize(const RunConfig& cfg, const BackendFactory* factory,
                 bool resuming) {
  Dataset train;
  std::vector<Prompt> seeds;
  Backends backends;
  try {
    cfg.evolve.validate();
    train = load_train_split(cfg);
    seeds = seeds_from_texts(resolve_seed_texts(cfg));
    backends = build_backends(cfg, factory);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  ScoreCache cache;
  AgentBundle agents{backends.predictor.get(), backends.analyzer.get(),
                     backends.generator.get()};
  try {
    const RunResult result =
        resuming ? resume(cfg.evolve, seeds, train, agents, *backends.embedder,
                          cache, cfg.checkpoint_dir)
                 : run(cfg.evolve, seeds, train, agents, *backends.embedder,
                       cache, cfg.checkpoint_dir);
    for (const auto& stats : result.history) print_iteration(stats);

    const auto& best = result.population.members.front();
    std::printf("best prompt (%s, score %lld/%lld):\n%s\n",
                best.prompt.id.c_str(),
                static_cast<long long>(best.fitness->score.num),
                static_cast<long long>(best.fitness->score.den),
                best.prompt.text.c_str());
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "run aborted: " << e.what() << "\n"
              << "checkpoints: " << cfg.checkpoint_dir << "\n";
    return 1;
  }
}

int cmd_evaluate(const RunConfig& cfg, const std::string& prompt_file,
                 const std::string& split, const BackendFactory* factory) {
  Dataset ds;
  Backends backends;
  std::vector<std::string> prompt_texts;
  try {
    ds = load_train_split(cfg, split);
    if (!fs::exists(prompt_file)) {
      throw DataError("prompt file does not exist: " + prompt_file);
    }
    std::ifstream in(prompt_file);
    std::string line;
    while (std::getline(in, line)) {
      const std::string stripped = trim(line);
      if (stripped.empty()) continue;
      if (stripped.front() == '{') {
        prompt_texts.push_back(
            nlohmann::json::parse(stripped).at("text").get<std::string>());
      } else {
        prompt_texts.push_back(stripped);
      }
    }
    if (prompt_texts.empty()) {
      throw DataError("prompt file holds no prompts: " + prompt_file);
    }
    backends = build_backends(cfg, factory);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: bad prompt file: " << e.what() << "\n";
    return 2;
  }

  try {
    // Deliberately a private in-memory cache: evaluate never touches the
    // score log of an optimization run.
    ScoreCache cache;
    EngineState state;
    state.rng = Rng(cfg.evolve.selection_seed);
    double sum = 0.0;
    for (std::size_t i = 0; i < prompt_texts.size(); ++i) {
      const Prompt p = make_seed_prompt(prompt_texts[i], state);
      const FitnessRecord record =
          score_prompt(p, ds, *backends.predictor, cache, cfg.evolve.eval, 0);
      sum += record.score.value();
      std::printf("prompt %zu (%s): %lld/%lld (%.2f%%)\n", i, p.id.c_str(),
                  static_cast<long long>(record.score.num),
                  static_cast<long long>(record.score.den),
                  100.0 * record.score.value());
    }
    std::printf("mean accuracy over %zu prompts on %s split: %.4f (%.2f%%)\n",
                prompt_texts.size(), ds.split.c_str(),
                sum / static_cast<double>(prompt_texts.size()),
                100.0 * sum / static_cast<double>(prompt_texts.size()));
    return 0;
  } catch (const Error& e) {
    std::cerr << "evaluation aborted: " << e.what() << "\n";
    return 1;
  }
}

void print_lineage(const std::map<std::string, PopulationMember>& index,
                   const std::string& id, int depth,
                   std::set<std::string>& visited) {
  const std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
  auto it = index.find(id);
  if (it == index.end()) {
    std::printf("%s%s (not recorded)\n", indent.c_str(), id.c_str());
    return;
  }
  const auto& m = it->second;
  std::printf("%s%s gen %d", indent.c_str(), id.c_str(), m.prompt.generation);
  if (m.fitness) {
    std::printf(" score %lld/%lld", static_cast<long long>(m.fitness->score.num),
                static_cast<long long>(m.fitness->score.den));
  }
  std::printf("\n%s  text: %s\n", indent.c_str(), m.prompt.text.c_str());
  if (m.feedback) {
    std::printf("%s  feedback: %s\n", indent.c_str(), m.feedback->guidance.c_str());
  }
  if (!visited.insert(id).second) return;  // shared ancestor already expanded
  for (const auto& parent : m.prompt.parent_ids) {
    print_lineage(index, parent, depth + 1, visited);
  }
}

int cmd_inspect(const std::string& dir, const std::string& prompt_id) {
  Checkpoint latest;
  std::map<std::string, PopulationMember> index;
  try {
    const auto file = latest_checkpoint(dir);
    if (!file) {
      std::cerr << "error: no checkpoint found under " << dir << "\n";
      return 2;
    }
    latest = read_checkpoint(*file);
    // Every ancestor was a member of some checkpointed population, so the
    // per-iteration files double as the lineage archive.
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("iter_", 0) != 0 || entry.path().extension() != ".json") continue;
      const Checkpoint cp = read_checkpoint(entry.path());
      for (const auto& m : cp.population.members) {
        auto [it, inserted] = index.emplace(m.prompt.id, m);
        if (!inserted && !it->second.feedback && m.feedback) {
          it->second = m;  // prefer the snapshot that carries feedback
        }
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  std::printf("run with %zu iterations recorded (latest t=%d)\n",
              latest.history.size(), latest.iteration);
  for (const auto& stats : latest.history) {
    print_iteration(stats);
    for (const auto& m : stats.members) {
      std::printf("    rank %d  %s  %lld/%lld\n", m.rank, m.prompt_id.c_str(),
                  static_cast<long long>(m.score_num),
                  static_cast<long long>(m.score_den));
    }
  }

  if (!prompt_id.empty()) {
    if (!index.count(prompt_id)) {
      std::cerr << "error: unknown prompt id " << prompt_id << "\n";
      return 2;
    }
    std::printf("lineage of %s:\n", prompt_id.c_str());
    std::set<std::string> visited;
    print_lineage(index, prompt_id, 1, visited);
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv,
            const BackendFactory* backend_factory) {
  CLI::App app{"promptevo: population-based prompt optimization"};
  app.require_subcommand(1);

  CliOverrides opt_o;
  auto* optimize = app.add_subcommand("optimize", "run the optimization loop");
  add_common_options(optimize, opt_o);
  optimize->add_option("--resume", opt_o.resume_dir,
                       "continue from this checkpoint directory");

  CliOverrides eval_o;
  std::string prompt_file;
  std::string split = "train";
  auto* evaluate = app.add_subcommand("evaluate", "score prompts on a split");
  add_common_options(evaluate, eval_o);
  evaluate->add_option("--prompts", prompt_file, "file with one prompt per line")
      ->required();
  evaluate->add_option("--split", split, "which side of the holdout to score")
      ->check(CLI::IsMember({"train", "test"}));

  std::string inspect_dir;
  std::string inspect_prompt_id;
  auto* inspect = app.add_subcommand("inspect", "report a run's history and lineage");
  inspect->add_option("dir", inspect_dir, "checkpoint directory")->required();
  inspect->add_option("--prompt-id", inspect_prompt_id,
                      "print this prompt's ancestry");

  CliOverrides resume_o;
  std::string resume_dir;
  auto* resume_cmd = app.add_subcommand("resume", "continue an interrupted run");
  add_common_options(resume_cmd, resume_o);
  resume_cmd->add_option("dir", resume_dir, "checkpoint directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (optimize->parsed()) {
      RunConfig cfg = build_config(optimize, opt_o);
      if (!opt_o.resume_dir.empty()) {
        cfg.checkpoint_dir = opt_o.resume_dir;
        return cmd_optimize(cfg, backend_factory, /*resuming=*/true);
      }
      return cmd_optimize(cfg, backend_factory, /*resuming=*/false);
    }
    if (evaluate->parsed()) {
      const RunConfig cfg = build_config(evaluate, eval_o);
      return cmd_evaluate(cfg, prompt_file, split, backend_factory);
    }
    if (inspect->parsed()) {
      return cmd_inspect(inspect_dir, inspect_prompt_id);
    }
    RunConfig cfg = build_config(resume_cmd, resume_o);
    cfg.checkpoint_dir = resume_dir;
    return cmd_optimize(cfg, backend_factory, /*resuming=*/true);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace promptevo
