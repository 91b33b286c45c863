#pragma once

#include <functional>
#include <memory>

#include "promptevo/config.hpp"

namespace promptevo {

// The pluggable side of the CLI: tests inject scripted agents, main() wires
// the HTTP-backed ones.
struct Backends {
  std::shared_ptr<PredictorAgent> predictor;
  std::shared_ptr<AnalyzerAgent> analyzer;
  std::shared_ptr<GeneratorAgent> generator;
  std::shared_ptr<EmbeddingProvider> embedder;
  std::shared_ptr<RateGate> gate;
};

using BackendFactory = std::function<Backends(const RunConfig&)>;

Backends make_http_backends(const RunConfig& cfg);

/// Entry point behind main(): subcommands optimize | evaluate | inspect |
/// resume. Returns the process exit code: 0 success, 1 aborted run or corrupt
/// checkpoint, 2 invalid configuration or usage.
int run_cli(int argc, const char* const* argv,
            const BackendFactory* backend_factory = nullptr);

}  // namespace promptevo
