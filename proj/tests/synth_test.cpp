#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "lgnn/graph.hpp"
#include "lgnn/synth.hpp"

using namespace lgnn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("same seed writes byte-identical cohort files") {
  SynthConfig cfg;
  cfg.n_patients = 80;
  cfg.seed = 42;
  const fs::path a = fs::temp_directory_path() / "lgnn_synth_a";
  const fs::path b = fs::temp_directory_path() / "lgnn_synth_b";
  fs::remove_all(a);
  fs::remove_all(b);
  save_cohort(generate(cfg), cfg, a);
  save_cohort(generate(cfg), cfg, b);
  for (const char* name : {"patients.csv", "diagnoses.csv", "timeseries.csv",
                           "ground_truth.csv"}) {
    CHECK(slurp(a / name) == slurp(b / name));
    CHECK(!slurp(a / name).empty());
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("different seeds change the cohort") {
  SynthConfig cfg;
  cfg.n_patients = 60;
  cfg.seed = 1;
  const auto c1 = generate(cfg);
  cfg.seed = 2;
  const auto c2 = generate(cfg);
  CHECK(c1.truth.los != c2.truth.los);
}

TEST_CASE("with noise off the length of stay follows the outcome model") {
  SynthConfig cfg;
  cfg.n_patients = 150;
  cfg.los_noise_sd = 0.0;
  const auto cohort = generate(cfg);
  for (size_t i = 0; i < cohort.records.size(); ++i) {
    const double expected = std::max(
        1.0, std::exp(cfg.los_baseline + cohort.truth.diag_effect[i] +
                      cohort.truth.severity[i]));
    CHECK(cohort.records[i].los == doctest::Approx(expected).epsilon(1e-12));
    CHECK(cohort.records[i].los == cohort.truth.los[i]);
  }
}

TEST_CASE("oracle msle vanishes without outcome noise") {
  SynthConfig cfg;
  cfg.n_patients = 200;
  cfg.los_noise_sd = 0.0;
  const auto cohort = generate(cfg);
  CHECK(oracle_best_msle(cfg, cohort.truth) ==
        doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("oracle msle approaches the noise variance for long stays") {
  // with a large baseline every stay is far above a day, log1p behaves
  // like log, and the best predictor leaves exactly the noise variance
  SynthConfig cfg;
  cfg.n_patients = 400;
  cfg.los_baseline = 7.0;
  cfg.los_noise_sd = 0.2;
  const auto cohort = generate(cfg);
  const double oracle = oracle_best_msle(cfg, cohort.truth);
  CHECK(oracle == doctest::Approx(0.04).epsilon(0.02));
}

TEST_CASE("code prevalence is right-skewed at the defaults") {
  SynthConfig cfg;
  const auto cohort = generate(cfg);

  std::map<std::string, int64_t> per_code;
  for (const auto& rec : cohort.records) {
    std::set<std::string> leaves;
    for (const auto& [path, hour] : rec.diagnoses)
      leaves.insert(path.back());
    for (const auto& leaf : leaves) ++per_code[leaf];
  }
  std::vector<int64_t> counts;
  for (const auto& [code, c] : per_code) counts.push_back(c);
  REQUIRE(counts.size() >= 10);
  std::sort(counts.begin(), counts.end());
  const double mean =
      static_cast<double>(std::accumulate(counts.begin(), counts.end(),
                                          int64_t{0})) /
      static_cast<double>(counts.size());
  const double median = static_cast<double>(counts[counts.size() / 2]);
  CHECK(mean / median > 2.0);
}

TEST_CASE("similarity neighbors share recorded diagnoses") {
  SynthConfig cfg;
  cfg.n_patients = 400;
  cfg.seed = 5;
  PreprocessConfig pcfg;
  const Dataset ds = preprocess(generate(cfg).records, pcfg);
  SimilarityParams gp;
  const PatientGraph graph = build_knn_graph(ds.diag, gp);

  int64_t edges = 0, sharing = 0;
  for (int64_t i = 0; i < graph.n; ++i) {
    std::set<int64_t> mine(ds.diag.rows[static_cast<size_t>(i)].begin(),
                           ds.diag.rows[static_cast<size_t>(i)].end());
    for (int64_t j : graph.neighbors[static_cast<size_t>(i)]) {
      ++edges;
      for (int64_t col : ds.diag.rows[static_cast<size_t>(j)])
        if (mine.count(col)) {
          ++sharing;
          break;
        }
    }
  }
  REQUIRE(edges > 0);
  CHECK(static_cast<double>(sharing) / static_cast<double>(edges) > 0.95);
}

TEST_CASE("planted pairs share a leaf code held by nobody else") {
  SynthConfig cfg;
  cfg.n_patients = 300;
  cfg.planted_pairs = true;
  cfg.n_planted_pairs = 20;
  const auto cohort = generate(cfg);
  REQUIRE(cohort.truth.pairs.size() == 20);

  std::map<std::string, std::set<std::string>> holders;
  for (const auto& rec : cohort.records)
    for (const auto& [path, hour] : rec.diagnoses) {
      std::string joined;
      for (const auto& part : path)
        joined += (joined.empty() ? "" : "|") + part;
      holders[joined].insert(rec.id);
    }
  for (const auto& [a, b, code] : cohort.truth.pairs) {
    REQUIRE(holders.count(code) == 1);
    CHECK(holders[code] == std::set<std::string>{a, b});
  }
}

TEST_CASE("every generated record passes cohort validation") {
  SynthConfig cfg;
  cfg.n_patients = 120;
  const auto cohort = generate(cfg);
  REQUIRE(cohort.records.size() == 120);
  for (const auto& rec : cohort.records) {
    CHECK_NOTHROW(validate_record(rec));
    CHECK(rec.los >= 1.0);
  }
}

TEST_CASE("infeasible configurations are rejected") {
  SynthConfig bad;
  bad.n_patients = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  SynthConfig pairs;
  pairs.n_patients = 10;
  pairs.planted_pairs = true;
  pairs.n_planted_pairs = 20;  // needs 40 patients
  CHECK_THROWS_AS(pairs.validate(), ConfigError);

  SynthConfig neg;
  neg.los_noise_sd = -1.0;
  CHECK_THROWS_AS(neg.validate(), ConfigError);
}
