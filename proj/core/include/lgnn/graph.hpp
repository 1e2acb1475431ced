#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lgnn/preprocess.hpp"

namespace lgnn {

struct SimilarityParams {
  double a = 5.0;
  double c = 0.001;
  int64_t k = 3;
  bool symmetrize = false;  // off by default: directed out-edges, exact degree k
};

struct PatientGraph {
  int64_t n = 0;
  SimilarityParams params;
  std::vector<std::vector<int64_t>> neighbors;  // out-neighbors per node
  std::vector<std::vector<double>> scores;      // edge score per out-neighbor

  int64_t edge_count() const;
};

// Eq.-1 style score on sorted sparse rows: a * sum over shared columns of
// (1/d_mu + c) minus the total number of set positions in both rows.
double similarity_score(std::span<const int64_t> row_i,
                        std::span<const int64_t> row_j,
                        std::span<const int64_t> d, double a, double c);

// Exact all-pairs k-NN: for each node the k best-scoring others, ties
// broken by smaller node index; out-degree min(k, n-1).
PatientGraph build_knn_graph(const DiagnosisMatrix& diag,
                             const SimilarityParams& params);

// Per-batch k-NN over hidden vectors by Euclidean distance, ties by
// smaller in-batch index. h: [b x d] row-major.
struct BatchGraph {
  int64_t n = 0;
  std::vector<std::vector<int64_t>> neighbors;
  std::vector<std::vector<double>> distances;
};

BatchGraph dynamic_knn_from_embeddings(std::span<const double> h, int64_t b,
                                       int64_t d, int64_t k);

struct GraphStats {
  std::map<int64_t, int64_t> out_degree_histogram;
  double score_min = 0.0, score_max = 0.0, score_mean = 0.0;
  int64_t components = 0;  // weakly connected
};

GraphStats graph_stats(const PatientGraph& g);

void save_graph(const PatientGraph& g, const std::filesystem::path& path);
PatientGraph load_graph(const std::filesystem::path& path);

}  // namespace lgnn
