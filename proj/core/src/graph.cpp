#include "lgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>

#include "lgnn/io.hpp"

namespace lgnn {

int64_t PatientGraph::edge_count() const {
  int64_t e = 0;
  for (const auto& nb : neighbors) e += static_cast<int64_t>(nb.size());
  return e;
}

double similarity_score(std::span<const int64_t> row_i,
                        std::span<const int64_t> row_j,
                        std::span<const int64_t> d, double a, double c) {
  double shared = 0.0;
  size_t i = 0, j = 0;
  while (i < row_i.size() && j < row_j.size()) {
    if (row_i[i] == row_j[j]) {
      const int64_t mu = row_i[i];
      if (d[static_cast<size_t>(mu)] < 1)
        throw DataError("diagnosis column " + std::to_string(mu) +
                        " present in a row but has occurrence count " +
                        std::to_string(d[static_cast<size_t>(mu)]));
      shared += 1.0 / static_cast<double>(d[static_cast<size_t>(mu)]) + c;
      ++i;
      ++j;
    } else if (row_i[i] < row_j[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return a * shared -
         static_cast<double>(row_i.size()) - static_cast<double>(row_j.size());
}

PatientGraph build_knn_graph(const DiagnosisMatrix& diag,
                             const SimilarityParams& params) {
  const int64_t n = diag.n;
  if (n < 2) throw DataError("k-NN graph needs at least 2 patients");
  if (params.k < 1) throw ConfigError("k must be positive");
  const std::vector<int64_t> d = diag.column_counts();

  PatientGraph g;
  g.n = n;
  g.params = params;
  g.neighbors.resize(static_cast<size_t>(n));
  g.scores.resize(static_cast<size_t>(n));
  const auto k = std::min<int64_t>(params.k, n - 1);

  std::vector<double> row_scores(static_cast<size_t>(n));
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < n; ++j)
      row_scores[static_cast<size_t>(j)] =
          j == i ? -std::numeric_limits<double>::infinity()
                 : similarity_score(diag.rows[static_cast<size_t>(i)],
                                    diag.rows[static_cast<size_t>(j)], d,
                                    params.a, params.c);
    std::iota(order.begin(), order.end(), int64_t{0});
    // best score first; ties go to the smaller node index
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](int64_t x, int64_t y) {
                        if (row_scores[static_cast<size_t>(x)] !=
                            row_scores[static_cast<size_t>(y)])
                          return row_scores[static_cast<size_t>(x)] >
                                 row_scores[static_cast<size_t>(y)];
                        return x < y;
                      });
    for (int64_t r = 0; r < k; ++r) {
      g.neighbors[static_cast<size_t>(i)].push_back(order[static_cast<size_t>(r)]);
      g.scores[static_cast<size_t>(i)].push_back(
          row_scores[static_cast<size_t>(order[static_cast<size_t>(r)])]);
    }
  }

  if (params.symmetrize) {
    for (int64_t i = 0; i < n; ++i) {
      const auto deg = g.neighbors[static_cast<size_t>(i)].size();
      for (size_t e = 0; e < deg; ++e) {
        const int64_t j = g.neighbors[static_cast<size_t>(i)][e];
        auto& back = g.neighbors[static_cast<size_t>(j)];
        if (std::find(back.begin(), back.end(), i) == back.end()) {
          back.push_back(i);
          g.scores[static_cast<size_t>(j)].push_back(
              g.scores[static_cast<size_t>(i)][e]);
        }
      }
    }
  }
  return g;
}

BatchGraph dynamic_knn_from_embeddings(std::span<const double> h, int64_t b,
                                       int64_t d, int64_t k) {
  if (b < 2) throw DataError("dynamic k-NN needs a batch of at least 2");
  if (static_cast<int64_t>(h.size()) != b * d)
    throw ShapeError("embedding buffer size does not match batch shape");
  BatchGraph g;
  g.n = b;
  g.neighbors.resize(static_cast<size_t>(b));
  g.distances.resize(static_cast<size_t>(b));
  const auto k_eff = std::min<int64_t>(k, b - 1);

  std::vector<double> dist(static_cast<size_t>(b));
  std::vector<int64_t> order(static_cast<size_t>(b));
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t j = 0; j < b; ++j) {
      if (j == i) {
        dist[static_cast<size_t>(j)] = std::numeric_limits<double>::infinity();
        continue;
      }
      double s = 0.0;
      for (int64_t c = 0; c < d; ++c) {
        const double diff = h[static_cast<size_t>(i * d + c)] -
                            h[static_cast<size_t>(j * d + c)];
        s += diff * diff;
      }
      dist[static_cast<size_t>(j)] = std::sqrt(s);
    }
    std::iota(order.begin(), order.end(), int64_t{0});
    std::partial_sort(order.begin(), order.begin() + k_eff, order.end(),
                      [&](int64_t x, int64_t y) {
                        if (dist[static_cast<size_t>(x)] !=
                            dist[static_cast<size_t>(y)])
                          return dist[static_cast<size_t>(x)] <
                                 dist[static_cast<size_t>(y)];
                        return x < y;
                      });
    for (int64_t r = 0; r < k_eff; ++r) {
      g.neighbors[static_cast<size_t>(i)].push_back(order[static_cast<size_t>(r)]);
      g.distances[static_cast<size_t>(i)].push_back(
          dist[static_cast<size_t>(order[static_cast<size_t>(r)])]);
    }
  }
  return g;
}

GraphStats graph_stats(const PatientGraph& g) {
  GraphStats s;
  double sum = 0.0;
  int64_t count = 0;
  s.score_min = std::numeric_limits<double>::infinity();
  s.score_max = -std::numeric_limits<double>::infinity();
  for (int64_t i = 0; i < g.n; ++i) {
    ++s.out_degree_histogram[static_cast<int64_t>(
        g.neighbors[static_cast<size_t>(i)].size())];
    for (double sc : g.scores[static_cast<size_t>(i)]) {
      sum += sc;
      ++count;
      s.score_min = std::min(s.score_min, sc);
      s.score_max = std::max(s.score_max, sc);
    }
  }
  s.score_mean = count ? sum / static_cast<double>(count) : 0.0;

  // weakly connected components via union-find
  std::vector<int64_t> parent(static_cast<size_t>(g.n));
  std::iota(parent.begin(), parent.end(), int64_t{0});
  std::function<int64_t(int64_t)> find = [&](int64_t x) {
    while (parent[static_cast<size_t>(x)] != x) {
      parent[static_cast<size_t>(x)] =
          parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
      x = parent[static_cast<size_t>(x)];
    }
    return x;
  };
  for (int64_t i = 0; i < g.n; ++i)
    for (int64_t j : g.neighbors[static_cast<size_t>(i)]) {
      const int64_t a = find(i), b2 = find(j);
      if (a != b2) parent[static_cast<size_t>(a)] = b2;
    }
  for (int64_t i = 0; i < g.n; ++i)
    if (find(i) == i) ++s.components;
  return s;
}

void save_graph(const PatientGraph& g, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << g.n << ' ' << g.params.k << ' ' << io::fmt_double(g.params.a) << ' '
     << io::fmt_double(g.params.c) << '\n';
  for (int64_t i = 0; i < g.n; ++i)
    for (size_t e = 0; e < g.neighbors[static_cast<size_t>(i)].size(); ++e)
      os << i << ' ' << g.neighbors[static_cast<size_t>(i)][e] << ' '
         << io::fmt_double(g.scores[static_cast<size_t>(i)][e]) << '\n';
}

PatientGraph load_graph(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  PatientGraph g;
  if (!(is >> g.n >> g.params.k >> g.params.a >> g.params.c))
    throw DataError("malformed graph header in " + path.string());
  g.neighbors.resize(static_cast<size_t>(g.n));
  g.scores.resize(static_cast<size_t>(g.n));
  int64_t src, dst;
  double score;
  while (is >> src >> dst >> score) {
    if (src < 0 || src >= g.n || dst < 0 || dst >= g.n)
      throw DataError("edge endpoint out of range in " + path.string());
    g.neighbors[static_cast<size_t>(src)].push_back(dst);
    g.scores[static_cast<size_t>(src)].push_back(score);
  }
  return g;
}

}  // namespace lgnn
