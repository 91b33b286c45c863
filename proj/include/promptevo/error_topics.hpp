#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "promptevo/agents.hpp"
#include "promptevo/eval.hpp"

namespace promptevo {

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // One vector per input text, all of the same dimension d >= 2. Must be
  // deterministic: identical text gives an identical vector.
  virtual std::vector<std::vector<double>> embed(
      const std::vector<std::string>& texts) = 0;
};

/// Deterministic local embedder: character n-gram counts hashed into a fixed
/// number of buckets, L2-normalized. No model quality to speak of, but stable
/// and dependency-free, which is what tests and offline runs need.
class HashNgramEmbedder : public EmbeddingProvider {
 public:
  explicit HashNgramEmbedder(int dimension = 32, int ngram = 3);
  std::vector<std::vector<double>> embed(
      const std::vector<std::string>& texts) override;

 private:
  int dimension_;
  int ngram_;
};

struct EmbeddingConfig {
  std::string endpoint_url;
  std::string model_name;
  std::string auth_env;
  std::chrono::milliseconds request_timeout{30000};
  int retry_budget = 3;
  std::chrono::milliseconds retry_base_delay{500};

  bool operator==(const EmbeddingConfig&) const = default;
};

/// Remote embedding endpoint speaking the generic JSON POST contract:
/// request {"model": ..., "input": [...]}, response
/// {"data": [{"embedding": [...]}]}.
class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(EmbeddingConfig cfg, RateGate* gate = nullptr);
  std::vector<std::vector<double>> embed(
      const std::vector<std::string>& texts) override;

 private:
  EmbeddingConfig cfg_;
  RateGate* gate_;
};

struct ErrorCluster {
  std::vector<std::string> member_ids;
  std::vector<double> centroid;
  int label = 0;
};

enum class EmbedField { gold, question, prediction };

std::string to_string(EmbedField field);
EmbedField embed_field_from_string(const std::string& s);

/// Embed one text per wrong case; by default the gold answer.
std::vector<std::vector<double>> embed_errors(
    const std::vector<WrongCase>& wrong, EmbeddingProvider& provider,
    EmbedField field = EmbedField::gold);

struct KMeansResult {
  std::vector<int> assignment;  // one cluster index per input vector
  std::vector<std::vector<double>> centroids;
  double wcss = 0.0;  // within-cluster sum of squared distances
};

/// Seeded k-means (k-means++ initialization, Lloyd iterations, a few restarts
/// keeping the lowest-inertia result). k is clamped to the number of points;
/// clusters left empty at convergence are dropped. Deterministic per seed.
KMeansResult kmeans(const std::vector<std::vector<double>>& vectors, int k,
                    std::uint64_t seed, int max_iterations = 100,
                    int restarts = 16);

/// Cluster wrong-prediction embeddings; `ids[i]` labels `vectors[i]`.
/// Clusters come back ordered by label.
std::vector<ErrorCluster> cluster_errors(
    const std::vector<std::vector<double>>& vectors,
    const std::vector<std::string>& ids, int num_clusters, std::uint64_t seed);

/// Member ids of the largest cluster (ties to the lowest label), subsampled
/// uniformly to max_samples when the cluster is bigger than that.
std::vector<std::string> select_major_cluster(
    const std::vector<ErrorCluster>& clusters, int max_samples,
    std::uint64_t seed);

/// Ablation path: a seeded uniform subset of all wrong samples.
std::vector<std::string> select_random(const std::vector<WrongCase>& wrong,
                                       int max_samples, std::uint64_t seed);

}  // namespace promptevo
