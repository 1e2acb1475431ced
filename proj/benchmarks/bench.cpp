#include <benchmark/benchmark.h>

#include <random>
#include <set>
#include <vector>

#include "lgnn/graph.hpp"
#include "lgnn/tensor.hpp"

using namespace lgnn;

namespace {

Tensor random_tensor(int64_t r, int64_t c, std::mt19937_64& rng,
                     bool requires_grad = false) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> v(static_cast<size_t>(r * c));
  for (auto& x : v) x = unif(rng);
  return Tensor::from({r, c}, std::move(v), requires_grad);
}

DiagnosisMatrix random_cohort(int64_t n, int64_t m, std::mt19937_64& rng) {
  DiagnosisMatrix mat;
  mat.n = n;
  mat.m = m;
  mat.rows.resize(static_cast<size_t>(n));
  std::uniform_int_distribution<int64_t> col(0, m - 1);
  for (auto& row : mat.rows) {
    std::set<int64_t> cols;
    const int64_t k = 2 + static_cast<int64_t>(rng() % 10);
    for (int64_t j = 0; j < k; ++j) cols.insert(col(rng));
    row.assign(cols.begin(), cols.end());
  }
  return mat;
}

void bm_matmul_forward(benchmark::State& state) {
  const int64_t n = state.range(0);
  std::mt19937_64 rng(1);
  NoGradGuard guard;
  Tensor a = random_tensor(n, n, rng);
  Tensor b = random_tensor(n, n, rng);
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(bm_matmul_forward)->Arg(32)->Arg(128)->Arg(256);

void bm_matmul_backward(benchmark::State& state) {
  const int64_t n = state.range(0);
  std::mt19937_64 rng(2);
  for (auto _ : state) {
    Tape::active().clear();
    Tensor a = random_tensor(n, n, rng, true);
    Tensor b = random_tensor(n, n, rng, true);
    backward(sum(matmul(a, b)));
    benchmark::DoNotOptimize(a.has_grad());
  }
}
BENCHMARK(bm_matmul_backward)->Arg(32)->Arg(128);

void bm_similarity_score(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const auto mat = random_cohort(2, 400, rng);
  const auto d = mat.column_counts();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        similarity_score(mat.rows[0], mat.rows[1], d, 5.0, 0.001));
  }
}
BENCHMARK(bm_similarity_score);

void bm_knn_graph(benchmark::State& state) {
  const int64_t n = state.range(0);
  std::mt19937_64 rng(4);
  const auto mat = random_cohort(n, 72, rng);
  SimilarityParams p;
  for (auto _ : state) {
    PatientGraph g = build_knn_graph(mat, p);
    benchmark::DoNotOptimize(g.edge_count());
  }
}
BENCHMARK(bm_knn_graph)->Arg(200)->Arg(1000)->Arg(2000);

void bm_segment_mean(benchmark::State& state) {
  const int64_t rows = state.range(0);
  std::mt19937_64 rng(5);
  NoGradGuard guard;
  Tensor x = random_tensor(rows, 64, rng);
  std::vector<int64_t> seg(static_cast<size_t>(rows));
  for (int64_t i = 0; i < rows; ++i)
    seg[static_cast<size_t>(i)] = i / 4;
  const int64_t n_seg = (rows + 3) / 4;
  for (auto _ : state) {
    Tensor y = segment_aggregate(x, seg, n_seg, SegmentMode::Mean);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(bm_segment_mean)->Arg(256)->Arg(4096);

}  // namespace

BENCHMARK_MAIN();
