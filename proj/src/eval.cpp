#include "promptevo/eval.hpp"

#include <atomic>
#include <cctype>
#include <condition_variable>
#include <fstream>
#include <thread>

#include "promptevo/error.hpp"
#include "promptevo/util.hpp"

namespace promptevo {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Canonical form of a raw number token: commas removed, leading zeros
// dropped, trailing fractional zeros dropped ("18.0" -> "18"), "-0" -> "0".
std::string canonical_number(std::string_view token) {
  std::string digits;
  bool negative = false;
  for (char c : token) {
    if (c == ',') continue;
    if (c == '-') {
      negative = true;
      continue;
    }
    digits.push_back(c);
  }
  std::string int_part = digits;
  std::string frac_part;
  if (const auto dot = digits.find('.'); dot != std::string::npos) {
    int_part = digits.substr(0, dot);
    frac_part = digits.substr(dot + 1);
  }
  std::size_t lead = 0;
  while (lead + 1 < int_part.size() && int_part[lead] == '0') ++lead;
  int_part = int_part.substr(lead);
  if (int_part.empty()) int_part = "0";
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();

  std::string out = int_part;
  if (!frac_part.empty()) out += "." + frac_part;
  if (negative && out != "0") out.insert(out.begin(), '-');
  return out;
}

// True when a ',' at position i separates standard thousands groups: exactly
// three digits follow before the next non-digit.
bool is_thousands_separator(std::string_view s, std::size_t i) {
  if (i + 3 >= s.size()) return false;
  if (!is_digit(s[i + 1]) || !is_digit(s[i + 2]) || !is_digit(s[i + 3])) {
    return false;
  }
  return i + 4 >= s.size() || !is_digit(s[i + 4]);
}

std::string extract_numeric(std::string_view s) {
  std::string last;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_digit(s[i])) {
      ++i;
      continue;
    }
    std::size_t start = i;
    bool negative = false;
    bool leading_dot = false;
    // A '.' directly before the first digit starts a bare fraction like ".5";
    // a '-' is a sign only when it is not an infix operator ("3-5").
    if (start > 0 && s[start - 1] == '.' &&
        (start < 2 || !is_digit(s[start - 2]))) {
      leading_dot = true;
      if (start > 1 && s[start - 2] == '-' &&
          (start < 3 || !std::isalnum(static_cast<unsigned char>(s[start - 3])))) {
        negative = true;
      }
    } else if (start > 0 && s[start - 1] == '-' &&
               (start < 2 ||
                (!std::isalnum(static_cast<unsigned char>(s[start - 2])) &&
                 s[start - 2] != '.'))) {
      negative = true;
    }

    std::string token;
    if (negative) token.push_back('-');
    if (leading_dot) token += "0.";
    while (i < s.size()) {
      if (is_digit(s[i])) {
        token.push_back(s[i]);
        ++i;
      } else if (s[i] == ',' && is_thousands_separator(s, i) && !leading_dot &&
                 token.find('.') == std::string::npos) {
        token.push_back(',');
        ++i;
      } else if (s[i] == '.' && i + 1 < s.size() && is_digit(s[i + 1]) &&
                 !leading_dot && token.find('.') == std::string::npos) {
        token.push_back('.');
        ++i;
      } else {
        break;
      }
    }
    last = token;
  }
  if (last.empty()) return "";
  return canonical_number(last);
}

std::string extract_choice(std::string_view s) {
  std::string last;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char lower = static_cast<char>(
        std::tolower(static_cast<unsigned char>(s[i])));
    if (lower < 'a' || lower > 'e') continue;
    const bool left_ok =
        i == 0 || !std::isalnum(static_cast<unsigned char>(s[i - 1]));
    const bool right_ok =
        i + 1 == s.size() || !std::isalnum(static_cast<unsigned char>(s[i + 1]));
    if (left_ok && right_ok) last.assign(1, lower);
  }
  return last;
}

std::string extract_binary(std::string_view s) {
  static const char* affirmations[] = {"yes", "true", "1"};
  static const char* negations[] = {"no", "false", "0"};
  std::string last;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!std::isalnum(static_cast<unsigned char>(s[i]))) {
      ++i;
      continue;
    }
    std::size_t start = i;
    while (i < s.size() && std::isalnum(static_cast<unsigned char>(s[i]))) ++i;
    const std::string word = to_lower(s.substr(start, i - start));
    for (const char* a : affirmations) {
      if (word == a) last = "yes";
    }
    for (const char* n : negations) {
      if (word == n) last = "no";
    }
  }
  return last;
}

}  // namespace

std::string extract_answer(std::string_view raw, TaskKind kind) {
  switch (kind) {
    case TaskKind::numeric: return extract_numeric(raw);
    case TaskKind::multiple_choice: return extract_choice(raw);
    case TaskKind::binary_label: return extract_binary(raw);
    case TaskKind::free_text: return to_lower(trim(raw));
  }
  throw Error("unknown task kind");
}

struct ScoreCache::Entry {
  bool ready = false;
  FitnessRecord record;
};

std::string ScoreCache::key(const std::string& prompt_id,
                            const std::string& fingerprint) const {
  return prompt_id + "/" + fingerprint;
}

std::optional<FitnessRecord> ScoreCache::get(
    const std::string& prompt_id, const std::string& dataset_fingerprint) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key(prompt_id, dataset_fingerprint));
  if (it == entries_.end() || !it->second->ready) return std::nullopt;
  return it->second->record;
}

FitnessRecord ScoreCache::get_or_compute(
    const std::string& prompt_id, const std::string& dataset_fingerprint,
    const std::function<FitnessRecord()>& compute) {
  const std::string k = key(prompt_id, dataset_fingerprint);
  std::unique_lock lock(mu_);
  for (;;) {
    auto it = entries_.find(k);
    if (it == entries_.end()) {
      // Become the single computation for this key; concurrent callers wait.
      auto entry = std::make_shared<Entry>();
      entries_.emplace(k, entry);
      lock.unlock();
      FitnessRecord record;
      try {
        record = compute();
      } catch (...) {
        lock.lock();
        entries_.erase(k);
        cv_.notify_all();
        throw;
      }
      lock.lock();
      entry->record = record;
      entry->ready = true;
      persist_locked(dataset_fingerprint, record);
      cv_.notify_all();
      return record;
    }
    if (it->second->ready) return it->second->record;
    cv_.wait(lock);
  }
}

void ScoreCache::attach_log(const std::filesystem::path& path) {
  std::lock_guard lock(mu_);
  log_path_ = path;
}

void ScoreCache::persist_locked(const std::string& fingerprint,
                                const FitnessRecord& record) {
  if (log_path_.empty()) return;
  nlohmann::json j = record;
  j["dataset_fingerprint"] = fingerprint;
  std::ofstream out(log_path_, std::ios::app);
  if (!out) throw DataError("cannot append to score log: " + log_path_.string());
  out << j.dump() << "\n";
}

void ScoreCache::replay_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return;  // nothing to replay
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
                      ": malformed score record: " + e.what());
    }
    auto record = j.get<FitnessRecord>();
    const std::string fingerprint = j.at("dataset_fingerprint").get<std::string>();
    const std::string k = key(record.prompt_id, fingerprint);
    std::lock_guard lock(mu_);
    if (entries_.count(k)) continue;
    auto entry = std::make_shared<Entry>();
    entry->record = std::move(record);
    entry->ready = true;
    entries_.emplace(k, std::move(entry));
  }
}

std::size_t ScoreCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

namespace {

PredictionOutcome evaluate_sample(const Prompt& prompt, const Sample& sample,
                                  PredictorAgent& predictor,
                                  const EvalOptions& options) {
  PredictionOutcome outcome;
  outcome.sample_id = sample.id;
  std::string error;
  for (int attempt = 0; attempt <= options.retry_budget; ++attempt) {
    if (attempt > 0 && options.retry_base_delay.count() > 0) {
      std::this_thread::sleep_for(options.retry_base_delay * (1 << (attempt - 1)));
    }
    try {
      outcome.predicted_answer = predictor.predict(prompt.text, sample.question);
      outcome.extracted_answer =
          extract_answer(outcome.predicted_answer, sample.task_kind);
      outcome.correct = !outcome.extracted_answer.empty() &&
                        outcome.extracted_answer == sample.gold_answer;
      return outcome;
    } catch (const std::exception& e) {
      error = e.what();
    }
  }
  // Failures count as incorrect so fitness denominators stay comparable.
  outcome.predicted_answer = "<error: " + error + ">";
  outcome.extracted_answer = "";
  outcome.correct = false;
  return outcome;
}

}  // namespace

FitnessRecord score_prompt(const Prompt& prompt, const Dataset& ds,
                           PredictorAgent& predictor, ScoreCache& cache,
                           const EvalOptions& options, int evaluated_at) {
  if (ds.samples.empty()) throw EvalError("cannot score on an empty dataset");

  return cache.get_or_compute(prompt.id, ds.fingerprint(), [&]() {
    const std::size_t n = ds.samples.size();
    std::vector<PredictionOutcome> outcomes(n);

    const int workers =
        std::max(1, std::min<int>(options.parallelism, static_cast<int>(n)));
    if (workers == 1) {
      for (std::size_t i = 0; i < n; ++i) {
        outcomes[i] = evaluate_sample(prompt, ds.samples[i], predictor, options);
      }
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> pool;
      pool.reserve(static_cast<std::size_t>(workers));
      for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            outcomes[i] =
                evaluate_sample(prompt, ds.samples[i], predictor, options);
          }
        });
      }
      for (auto& t : pool) t.join();
    }

    std::int64_t correct = 0;
    std::size_t failures = 0;
    for (const auto& o : outcomes) {
      correct += o.correct ? 1 : 0;
      if (o.predicted_answer.rfind("<error:", 0) == 0) ++failures;
    }
    if (static_cast<double>(failures) >
        options.abort_error_fraction * static_cast<double>(n)) {
      throw EvalError("evaluation of prompt " + prompt.id + " aborted: " +
                      std::to_string(failures) + " of " + std::to_string(n) +
                      " samples failed after retries");
    }

    FitnessRecord record;
    record.prompt_id = prompt.id;
    record.score = {correct, static_cast<std::int64_t>(n)};
    record.outcomes = std::move(outcomes);
    record.evaluated_at = evaluated_at;
    return record;
  });
}

std::vector<WrongCase> wrong_samples(const FitnessRecord& record,
                                     const Dataset& ds) {
  if (record.outcomes.size() != ds.samples.size()) {
    throw EvalError("fitness record does not cover the dataset");
  }
  std::vector<WrongCase> wrong;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    if (record.outcomes[i].sample_id != ds.samples[i].id) {
      throw EvalError("fitness record outcomes are misaligned with the dataset");
    }
    if (!record.outcomes[i].correct) {
      wrong.push_back({ds.samples[i], record.outcomes[i]});
    }
  }
  return wrong;
}

}  // namespace promptevo
