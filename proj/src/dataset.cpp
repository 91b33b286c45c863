#include "promptevo/dataset.hpp"

#include <fstream>

#include "json.hpp"
#include "promptevo/error.hpp"
#include "promptevo/eval.hpp"
#include "promptevo/util.hpp"

namespace promptevo {

std::string Dataset::fingerprint() const {
  std::uint64_t h = fnv1a64(to_string(task_kind));
  for (const auto& s : samples) {
    h = fnv1a64(s.id, h);
    h = fnv1a64(s.question, h);
    h = fnv1a64(s.gold_answer, h);
  }
  return to_hex(h);
}

std::string normalize_gold(std::string_view raw, TaskKind kind) {
  std::string_view text = raw;
  if (kind == TaskKind::numeric) {
    // GSM8K rationales terminate with "#### <answer>".
    const auto pos = text.rfind("####");
    if (pos != std::string_view::npos) text = text.substr(pos + 4);
  }
  return extract_answer(text, kind);
}

Dataset load_dataset(const std::filesystem::path& path, TaskKind kind,
                     const std::string& split) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path.string());

  Dataset ds;
  ds.name = path.stem().string();
  ds.split = split;
  ds.task_kind = kind;

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": malformed JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("question") || !j.contains("answer") ||
        !j.at("question").is_string() || !j.at("answer").is_string()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected an object with string fields "
                      "'question' and 'answer'");
    }

    Sample s;
    s.id = std::to_string(ds.samples.size());
    s.question = j.at("question").get<std::string>();
    s.gold_answer = normalize_gold(j.at("answer").get<std::string>(), kind);
    s.task_kind = kind;

    if (trim(s.question).empty()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": blank question");
    }
    if (s.gold_answer.empty()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": blank or unextractable answer for task kind " +
                      to_string(kind));
    }
    ds.samples.push_back(std::move(s));
  }

  if (ds.samples.empty()) {
    throw DataError("dataset file has no samples: " + path.string());
  }
  return ds;
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& ds,
                                          double holdout_fraction,
                                          std::uint64_t seed) {
  if (ds.samples.size() < 2) {
    throw DataError("cannot split a dataset with fewer than 2 samples");
  }
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw DataError("holdout fraction must lie in (0,1)");
  }
  const std::size_t n = ds.samples.size();
  const auto n_test = static_cast<std::size_t>(
      static_cast<double>(n) * holdout_fraction + 0.5);
  if (n_test == 0 || n_test >= n) {
    throw DataError("holdout fraction yields an empty split");
  }

  Rng rng(seed);
  const auto test_indices = sample_indices(rng, n, n_test);
  std::vector<bool> is_test(n, false);
  for (auto i : test_indices) is_test[i] = true;

  Dataset train;
  train.name = ds.name;
  train.split = "train";
  train.task_kind = ds.task_kind;
  Dataset test;
  test.name = ds.name;
  test.split = "test";
  test.task_kind = ds.task_kind;

  for (std::size_t i = 0; i < n; ++i) {
    (is_test[i] ? test : train).samples.push_back(ds.samples[i]);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace promptevo
