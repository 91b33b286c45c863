#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "promptevo/core.hpp"

namespace promptevo {

struct Dataset {
  std::string name;
  std::vector<Sample> samples;
  std::string split;  // "train" or "test"
  TaskKind task_kind = TaskKind::free_text;

  // Content hash; identifies the dataset in the score cache.
  std::string fingerprint() const;
};

/// Normalize a raw gold answer for its task kind. For numeric answers a
/// GSM8K-style "#### 42" terminator wins over earlier numbers in the
/// rationale. Returns the empty string when nothing extractable is found.
std::string normalize_gold(std::string_view raw, TaskKind kind);

/// Load a line-delimited JSON corpus ({"question": ..., "answer": ...} per
/// line). Sample ids are assigned by line order. Throws DataError naming the
/// offending line on malformed or blank records.
Dataset load_dataset(const std::filesystem::path& path, TaskKind kind,
                     const std::string& split);

/// Deterministic disjoint split; `holdout_fraction` of the samples (rounded)
/// go to the test side. Throws DataError if either side would be empty.
std::pair<Dataset, Dataset> split_holdout(const Dataset& ds,
                                          double holdout_fraction,
                                          std::uint64_t seed);

}  // namespace promptevo
