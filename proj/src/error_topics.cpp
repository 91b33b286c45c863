#include "promptevo/error_topics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "promptevo/error.hpp"
#include "promptevo/util.hpp"

namespace promptevo {

HashNgramEmbedder::HashNgramEmbedder(int dimension, int ngram)
    : dimension_(dimension), ngram_(ngram) {
  if (dimension_ < 2) throw ConfigError("embedding dimension must be >= 2");
  if (ngram_ < 1) throw ConfigError("ngram size must be >= 1");
}

std::vector<std::vector<double>> HashNgramEmbedder::embed(
    const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& raw : texts) {
    const std::string text = to_lower(trim(raw));
    std::vector<double> v(static_cast<std::size_t>(dimension_), 0.0);
    const auto n = static_cast<std::size_t>(ngram_);
    if (text.size() >= n) {
      for (std::size_t i = 0; i + n <= text.size(); ++i) {
        const auto h = fnv1a64(std::string_view(text).substr(i, n));
        v[h % static_cast<std::uint64_t>(dimension_)] += 1.0;
      }
    } else if (!text.empty()) {
      v[fnv1a64(text) % static_cast<std::uint64_t>(dimension_)] += 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::string to_string(EmbedField field) {
  switch (field) {
    case EmbedField::gold: return "gold";
    case EmbedField::question: return "question";
    case EmbedField::prediction: return "prediction";
  }
  throw Error("unknown embed field");
}

EmbedField embed_field_from_string(const std::string& s) {
  if (s == "gold") return EmbedField::gold;
  if (s == "question") return EmbedField::question;
  if (s == "prediction") return EmbedField::prediction;
  throw ConfigError("unknown embed field: '" + s + "'");
}

std::vector<std::vector<double>> embed_errors(
    const std::vector<WrongCase>& wrong, EmbeddingProvider& provider,
    EmbedField field) {
  if (wrong.empty()) throw Error("embed_errors requires at least one wrong sample");
  std::vector<std::string> texts;
  texts.reserve(wrong.size());
  for (const auto& w : wrong) {
    switch (field) {
      case EmbedField::gold: texts.push_back(w.sample.gold_answer); break;
      case EmbedField::question: texts.push_back(w.sample.question); break;
      case EmbedField::prediction: texts.push_back(w.outcome.predicted_answer); break;
    }
  }
  auto vectors = provider.embed(texts);
  if (vectors.size() != texts.size()) {
    throw ProtocolError("embedding provider returned " +
                        std::to_string(vectors.size()) + " vectors for " +
                        std::to_string(texts.size()) + " inputs");
  }
  const std::size_t dim = vectors.empty() ? 0 : vectors.front().size();
  for (const auto& v : vectors) {
    if (v.size() != dim) {
      throw ProtocolError("embedding dimensions differ within one batch");
    }
  }
  if (dim < 2) throw ProtocolError("embedding dimension must be >= 2");
  return vectors;
}

namespace {

double squared_distance(const std::vector<double>& a,
                        const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

// One k-means++ seeding plus Lloyd iterations.
KMeansResult kmeans_once(const std::vector<std::vector<double>>& vectors,
                         int k, Rng& rng, int max_iterations) {
  const std::size_t n = vectors.size();
  std::vector<std::vector<double>> centroids;
  centroids.reserve(static_cast<std::size_t>(k));

  // k-means++: first centroid uniform, then D^2-weighted picks.
  centroids.push_back(vectors[uniform_index(rng, n)]);
  std::vector<double> dist2(n, 0.0);
  while (centroids.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      for (const auto& c : centroids) {
        best = std::min(best, squared_distance(vectors[i], c));
      }
      dist2[i] = best;
      total += best;
    }
    std::size_t pick;
    if (total <= 0.0) {
      pick = uniform_index(rng, n);  // all points coincide with a centroid
    } else {
      const double target = uniform_double(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(vectors[pick]);
  }

  std::vector<int> assignment(n, -1);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::max();
      for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = squared_distance(vectors[i], centroids[c]);
        if (d < best_d) {  // strict: ties stay with the lowest index
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (assignment[i] != best) {
        assignment[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    const std::size_t dim = vectors.front().size();
    std::vector<std::vector<double>> sums(
        centroids.size(), std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(centroids.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(assignment[i]);
      ++counts[c];
      for (std::size_t d = 0; d < dim; ++d) sums[c][d] += vectors[i][d];
    }
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      if (counts[c] == 0) continue;  // empty clusters keep their centroid
      for (std::size_t d = 0; d < dim; ++d) {
        centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
      }
    }
  }

  KMeansResult result;
  result.assignment = std::move(assignment);
  result.centroids = std::move(centroids);
  for (std::size_t i = 0; i < n; ++i) {
    result.wcss += squared_distance(
        vectors[i], result.centroids[static_cast<std::size_t>(result.assignment[i])]);
  }
  return result;
}

// Relabel so only non-empty clusters remain, preserving centroid order.
void drop_empty_clusters(KMeansResult& result) {
  std::vector<std::size_t> counts(result.centroids.size(), 0);
  for (int a : result.assignment) ++counts[static_cast<std::size_t>(a)];
  std::vector<int> remap(result.centroids.size(), -1);
  std::vector<std::vector<double>> kept;
  for (std::size_t c = 0; c < result.centroids.size(); ++c) {
    if (counts[c] == 0) continue;
    remap[c] = static_cast<int>(kept.size());
    kept.push_back(std::move(result.centroids[c]));
  }
  for (int& a : result.assignment) a = remap[static_cast<std::size_t>(a)];
  result.centroids = std::move(kept);
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& vectors, int k,
                    std::uint64_t seed, int max_iterations, int restarts) {
  if (vectors.empty()) throw Error("kmeans requires at least one vector");
  if (k < 1) throw Error("kmeans requires k >= 1");
  k = std::min<int>(k, static_cast<int>(vectors.size()));

  Rng rng(seed);
  KMeansResult best;
  bool have_best = false;
  for (int r = 0; r < std::max(1, restarts); ++r) {
    KMeansResult candidate = kmeans_once(vectors, k, rng, max_iterations);
    if (!have_best || candidate.wcss < best.wcss) {
      best = std::move(candidate);
      have_best = true;
    }
  }
  drop_empty_clusters(best);
  return best;
}

std::vector<ErrorCluster> cluster_errors(
    const std::vector<std::vector<double>>& vectors,
    const std::vector<std::string>& ids, int num_clusters, std::uint64_t seed) {
  if (vectors.size() != ids.size()) {
    throw Error("cluster_errors: ids and vectors differ in length");
  }
  if (num_clusters < 1) throw Error("cluster_errors requires num_clusters >= 1");

  const KMeansResult result = kmeans(vectors, num_clusters, seed);

  std::vector<ErrorCluster> clusters(result.centroids.size());
  for (std::size_t c = 0; c < result.centroids.size(); ++c) {
    clusters[c].centroid = result.centroids[c];
    clusters[c].label = static_cast<int>(c);
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    clusters[static_cast<std::size_t>(result.assignment[i])].member_ids.push_back(ids[i]);
  }
  return clusters;
}

std::vector<std::string> select_major_cluster(
    const std::vector<ErrorCluster>& clusters, int max_samples,
    std::uint64_t seed) {
  if (clusters.empty()) throw Error("select_major_cluster requires clusters");
  if (max_samples < 1) throw Error("max_samples must be >= 1");

  const ErrorCluster* largest = &clusters.front();
  for (const auto& c : clusters) {
    if (c.member_ids.size() > largest->member_ids.size() ||
        (c.member_ids.size() == largest->member_ids.size() &&
         c.label < largest->label)) {
      largest = &c;
    }
  }

  const auto& ids = largest->member_ids;
  if (ids.size() <= static_cast<std::size_t>(max_samples)) return ids;

  Rng rng(seed);
  auto picks = sample_indices(rng, ids.size(), static_cast<std::size_t>(max_samples));
  std::sort(picks.begin(), picks.end());
  std::vector<std::string> out;
  out.reserve(picks.size());
  for (auto i : picks) out.push_back(ids[i]);
  return out;
}

std::vector<std::string> select_random(const std::vector<WrongCase>& wrong,
                                       int max_samples, std::uint64_t seed) {
  if (wrong.empty()) throw Error("select_random requires wrong samples");
  if (max_samples < 1) throw Error("max_samples must be >= 1");

  Rng rng(seed);
  auto picks = sample_indices(rng, wrong.size(),
                              std::min<std::size_t>(wrong.size(),
                                                    static_cast<std::size_t>(max_samples)));
  std::sort(picks.begin(), picks.end());
  std::vector<std::string> out;
  out.reserve(picks.size());
  for (auto i : picks) out.push_back(wrong[i].sample.id);
  return out;
}

}  // namespace promptevo
