#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "lgnn/graph.hpp"

using namespace lgnn;

namespace {

DiagnosisMatrix random_matrix(int64_t n, int64_t m, std::mt19937_64& rng,
                              double density = 0.2) {
  DiagnosisMatrix mat;
  mat.n = n;
  mat.m = m;
  mat.rows.resize(static_cast<size_t>(n));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (auto& row : mat.rows)
    for (int64_t c = 0; c < m; ++c)
      if (unif(rng) < density) row.push_back(c);
  // every column needs at least one occurrence so d_mu >= 1
  for (int64_t c = 0; c < m; ++c) {
    const auto counts = mat.column_counts();
    if (counts[static_cast<size_t>(c)] == 0)
      mat.rows[static_cast<size_t>(rng() % static_cast<uint64_t>(n))]
          .push_back(c);
  }
  for (auto& row : mat.rows) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  return mat;
}

// exhaustive construction straight from the definition
PatientGraph naive_knn(const DiagnosisMatrix& mat,
                       const SimilarityParams& p) {
  const auto d = mat.column_counts();
  PatientGraph g;
  g.n = mat.n;
  g.params = p;
  g.neighbors.resize(static_cast<size_t>(mat.n));
  g.scores.resize(static_cast<size_t>(mat.n));
  for (int64_t i = 0; i < mat.n; ++i) {
    std::vector<std::pair<double, int64_t>> all;
    for (int64_t j = 0; j < mat.n; ++j) {
      if (i == j) continue;
      all.push_back({similarity_score(mat.rows[static_cast<size_t>(i)],
                                      mat.rows[static_cast<size_t>(j)], d,
                                      p.a, p.c),
                     j});
    }
    std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
      if (x.first != y.first) return x.first > y.first;
      return x.second < y.second;
    });
    const auto keep = std::min<size_t>(static_cast<size_t>(p.k), all.size());
    for (size_t e = 0; e < keep; ++e) {
      g.neighbors[static_cast<size_t>(i)].push_back(all[e].second);
      g.scores[static_cast<size_t>(i)].push_back(all[e].first);
    }
  }
  return g;
}

}  // namespace

TEST_CASE("similarity score hand cases") {
  const std::vector<int64_t> d{2, 4, 3};
  const std::vector<int64_t> empty{};
  const std::vector<int64_t> only_first{0};
  CHECK(similarity_score(empty, only_first, d, 5.0, 0.001) == -1.0);

  const std::vector<int64_t> third{2};
  const std::vector<int64_t> d2{99, 99, 2};
  CHECK(similarity_score(third, third, d2, 5.0, 0.001) ==
        doctest::Approx(0.505).epsilon(1e-12));

  const std::vector<int64_t> first_two{0, 1};
  CHECK(similarity_score(first_two, only_first, d, 5.0, 0.001) ==
        doctest::Approx(-0.495).epsilon(1e-12));
}

TEST_CASE("similarity score properties") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const auto mat = random_matrix(8, 12, rng);
    const auto d = mat.column_counts();
    const auto& ri = mat.rows[rng() % 8];
    const auto& rj = mat.rows[rng() % 8];
    CHECK(similarity_score(ri, rj, d, 5.0, 0.001) ==
          similarity_score(rj, ri, d, 5.0, 0.001));
  }

  // sharing a rarer diagnosis scores strictly higher
  const std::vector<int64_t> shared{0};
  double prev = 1e9;
  for (int64_t count = 1; count <= 20; ++count) {
    const std::vector<int64_t> d{count};
    const double s = similarity_score(shared, shared, d, 5.0, 0.001);
    CHECK(s < prev);
    prev = s;
  }

  // each unshared diagnosis costs exactly 1
  const std::vector<int64_t> d{3, 3, 3};
  const std::vector<int64_t> base{0};
  const std::vector<int64_t> extra{0, 1};
  const double without = similarity_score(base, base, d, 5.0, 0.001);
  const double with = similarity_score(base, extra, d, 5.0, 0.001);
  CHECK(without - with == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<int64_t> zero_count{0};
  const std::vector<int64_t> bad_d{0};
  CHECK_THROWS_AS(similarity_score(zero_count, zero_count, bad_d, 5.0, 0.001),
                  DataError);
}

TEST_CASE("identical cohort falls back to index tie-breaking") {
  DiagnosisMatrix mat;
  mat.n = 5;
  mat.m = 2;
  mat.rows.assign(5, {0, 1});
  SimilarityParams p;
  const auto g = build_knn_graph(mat, p);
  for (int64_t i = 0; i < 5; ++i) {
    std::vector<int64_t> expected;
    for (int64_t j = 0; j < 5 && expected.size() < 3; ++j)
      if (j != i) expected.push_back(j);
    CHECK(g.neighbors[static_cast<size_t>(i)] == expected);
  }
}

TEST_CASE("degree saturates at n minus one") {
  DiagnosisMatrix mat;
  mat.n = 3;
  mat.m = 1;
  mat.rows = {{0}, {0}, {}};
  SimilarityParams p;  // k = 3
  const auto g = build_knn_graph(mat, p);
  for (const auto& nb : g.neighbors) CHECK(nb.size() == 2);
}

TEST_CASE("knn graph matches the naive oracle") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 40; ++trial) {
    const int64_t n = 4 + static_cast<int64_t>(rng() % 120);
    const auto mat = random_matrix(n, 10 + static_cast<int64_t>(rng() % 20), rng);
    SimilarityParams p;
    p.k = 1 + static_cast<int64_t>(rng() % 5);
    const auto fast = build_knn_graph(mat, p);
    const auto slow = naive_knn(mat, p);
    REQUIRE(fast.neighbors == slow.neighbors);
    for (size_t i = 0; i < fast.scores.size(); ++i)
      for (size_t e = 0; e < fast.scores[i].size(); ++e)
        CHECK(fast.scores[i][e] == slow.scores[i][e]);
  }
}

TEST_CASE("shared-term neighbor ordering is invariant to scaling a") {
  std::mt19937_64 rng(47);
  const auto mat = random_matrix(20, 15, rng);
  const auto d = mat.column_counts();
  // with c = 0 and the penalty removed, ordering depends only on the
  // shared-diagnoses sum, which scales linearly in a
  const auto shared_term = [&](int64_t i, int64_t j, double a) {
    const double full = similarity_score(mat.rows[static_cast<size_t>(i)],
                                         mat.rows[static_cast<size_t>(j)], d,
                                         a, 0.0);
    const double penalty =
        static_cast<double>(mat.rows[static_cast<size_t>(i)].size() +
                            mat.rows[static_cast<size_t>(j)].size());
    return full + penalty;
  };
  // clearly separated pairs must rank the same way under either scale;
  // a margin keeps rounding noise out of the comparison
  for (int64_t i = 0; i < 20; ++i) {
    for (int64_t j = 0; j < 20; ++j) {
      for (int64_t k = j + 1; k < 20; ++k) {
        if (j == i || k == i) continue;
        const double d5 = shared_term(i, j, 5.0) - shared_term(i, k, 5.0);
        const double d17 = shared_term(i, j, 17.0) - shared_term(i, k, 17.0);
        if (std::abs(d5) > 1e-9) CHECK(d5 * d17 > 0.0);
      }
    }
  }
}

TEST_CASE("dynamic knn hand case and tie rules") {
  const std::vector<double> h{0.0, 1.0, 10.0};
  const auto g = dynamic_knn_from_embeddings(h, 3, 1, 1);
  CHECK(g.neighbors[0] == std::vector<int64_t>{1});
  CHECK(g.neighbors[1] == std::vector<int64_t>{0});
  CHECK(g.neighbors[2] == std::vector<int64_t>{1});

  const std::vector<double> dup{1.0, 1.0, 5.0};
  const auto gd = dynamic_knn_from_embeddings(dup, 3, 1, 1);
  CHECK(gd.neighbors[0] == std::vector<int64_t>{1});
  CHECK(gd.neighbors[1] == std::vector<int64_t>{0});
  CHECK(gd.distances[0][0] == 0.0);

  const auto full = dynamic_knn_from_embeddings(h, 3, 1, 10);
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(full.neighbors[static_cast<size_t>(i)].size() == 2);
    for (int64_t nb : full.neighbors[static_cast<size_t>(i)]) CHECK(nb != i);
  }

  CHECK_THROWS_AS(dynamic_knn_from_embeddings(std::vector<double>{1.0}, 1, 1, 1),
                  DataError);
}

TEST_CASE("graph stats") {
  std::mt19937_64 rng(53);
  const auto mat = random_matrix(30, 12, rng);
  SimilarityParams p;
  const auto g = build_knn_graph(mat, p);
  const auto stats = graph_stats(g);
  REQUIRE(stats.out_degree_histogram.size() == 1);
  CHECK(stats.out_degree_histogram.at(3) == 30);
  CHECK(stats.components >= 1);
  CHECK(stats.score_min <= stats.score_mean);
  CHECK(stats.score_mean <= stats.score_max);

  // two isolated cliques stay separate components
  DiagnosisMatrix split;
  split.n = 4;
  split.m = 2;
  split.rows = {{0}, {0}, {1}, {1}};
  SimilarityParams p1;
  p1.k = 1;
  const auto g2 = build_knn_graph(split, p1);
  CHECK(graph_stats(g2).components == 2);
}

TEST_CASE("graph persistence round trip") {
  std::mt19937_64 rng(59);
  const auto mat = random_matrix(25, 10, rng);
  SimilarityParams p;
  const auto g = build_knn_graph(mat, p);
  const auto path = std::filesystem::temp_directory_path() / "lgnn_graph.edges";
  save_graph(g, path);
  const auto loaded = load_graph(path);
  CHECK(loaded.n == g.n);
  CHECK(loaded.neighbors == g.neighbors);
  for (size_t i = 0; i < g.scores.size(); ++i)
    for (size_t e = 0; e < g.scores[i].size(); ++e)
      CHECK(loaded.scores[i][e] == g.scores[i][e]);
  std::filesystem::remove(path);
}
