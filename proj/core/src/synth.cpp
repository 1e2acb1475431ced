#include "lgnn/synth.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "lgnn/errors.hpp"
#include "lgnn/io.hpp"
#include <nlohmann/json.hpp>

namespace lgnn {

void SynthConfig::validate() const {
  if (n_patients < 4) throw ConfigError("n_patients must be at least 4");
  if (n_roots < 1 || n_children < 1 || n_leaves < 1)
    throw ConfigError("hierarchy dimensions must be positive");
  if (!(prevalence_min > 0.0 && prevalence_max <= 1.0 &&
        prevalence_min <= prevalence_max))
    throw ConfigError("prevalence bounds must satisfy 0 < min <= max <= 1");
  if (hours < 1) throw ConfigError("hours must be positive");
  if (codes_per_patient < 1 || codes_per_patient > n_roots)
    throw ConfigError("codes_per_patient must lie between 1 and n_roots");
  if (n_profiles < 1) throw ConfigError("n_profiles must be positive");
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0))
    throw ConfigError("mutation_rate must lie in [0, 1]");
  if (profile_effect_sd < 0.0)
    throw ConfigError("profile_effect_sd must be nonnegative");
  if (!(obs_rate > 0.0 && obs_rate <= 1.0))
    throw ConfigError("obs_rate must lie in (0, 1]");
  if (los_noise_sd < 0.0 || severity_sd < 0.0 || patient_bias_sd < 0.0 ||
      step_noise_sd < 0.0)
    throw ConfigError("noise scales must be nonnegative");
  if (planted_pairs && 2 * n_planted_pairs > n_patients)
    throw ConfigError("not enough patients for the requested planted pairs");
}

namespace {

struct Leaf {
  std::string path;  // code joined by '|'
  double prevalence;
  double effect;
};

std::vector<Leaf> make_leaves(const SynthConfig& cfg) {
  std::vector<Leaf> leaves;
  for (int64_t r = 0; r < cfg.n_roots; ++r)
    for (int64_t c = 0; c < cfg.n_children; ++c)
      for (int64_t l = 0; l < cfg.n_leaves; ++l) {
        Leaf leaf;
        leaf.path = "ch" + std::to_string(r + 1) + "|g" +
                    std::to_string(r + 1) + "." + std::to_string(c + 1) +
                    "|d" + std::to_string(r + 1) + "." + std::to_string(c + 1) +
                    "." + std::to_string(l + 1);
        // the power law restarts inside every chapter, so each chapter
        // holds a few common codes and a long rare tail
        const int64_t within = c * cfg.n_leaves + l;
        leaf.prevalence =
            std::max(cfg.prevalence_min,
                     cfg.prevalence_max *
                         std::pow(static_cast<double>(within + 1),
                                  -cfg.prevalence_decay));
        leaf.effect = std::min(
            3.0, std::sqrt(cfg.prevalence_max / leaf.prevalence)) *
            cfg.effect_scale;
        leaves.push_back(std::move(leaf));
      }
  return leaves;
}

std::string patient_id(int64_t i, int64_t n) {
  int width = 1;
  for (int64_t v = n - 1; v >= 10; v /= 10) ++width;
  std::ostringstream os;
  os << 'p';
  std::string digits = std::to_string(i);
  os << std::string(static_cast<size_t>(std::max(0, width - static_cast<int>(digits.size()))), '0')
     << digits;
  return os.str();
}

}  // namespace

SynthCohort generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const auto leaves = make_leaves(cfg);
  const int64_t n = cfg.n_patients;
  const int64_t per_root = cfg.n_children * cfg.n_leaves;

  // draw one leaf inside a root, weighted by prevalence
  const auto draw_leaf_in_root = [&](int64_t root, int64_t avoid) {
    std::vector<double> w(static_cast<size_t>(per_root));
    for (int64_t l = 0; l < per_root; ++l)
      w[static_cast<size_t>(l)] =
          root * per_root + l == avoid
              ? 0.0
              : leaves[static_cast<size_t>(root * per_root + l)].prevalence;
    std::discrete_distribution<int> dist(w.begin(), w.end());
    return root * per_root + dist(rng);
  };

  // comorbidity profiles: a profile is one leaf from each of
  // codes_per_patient distinct roots plus a latent interaction effect that
  // no single code carries. Patients inherit a profile (with occasional
  // mutation), so diagnosis-similar patients share most of their codes and
  // their latent outcome drivers, and every patient maps to the same
  // number of indicator columns.
  struct Profile {
    std::vector<int64_t> leaf_ids;
    double gamma = 0.0;
  };
  std::vector<Profile> profiles(static_cast<size_t>(cfg.n_profiles));
  for (auto& prof : profiles) {
    std::vector<int64_t> roots(static_cast<size_t>(cfg.n_roots));
    for (int64_t r = 0; r < cfg.n_roots; ++r)
      roots[static_cast<size_t>(r)] = r;
    for (size_t i = roots.size(); i > 1; --i)
      std::swap(roots[i - 1], roots[rng() % i]);
    for (int64_t c = 0; c < cfg.codes_per_patient; ++c)
      prof.leaf_ids.push_back(
          draw_leaf_in_root(roots[static_cast<size_t>(c)], -1));
    std::sort(prof.leaf_ids.begin(), prof.leaf_ids.end());
    prof.gamma = cfg.profile_effect_sd * gauss(rng);
  }

  // mutations may only introduce codes some profile already carries;
  // a code unique to one patient would fall out of a training-split
  // vocabulary and leave that patient with fewer indicator columns,
  // which the similarity penalty would mistake for closeness
  std::vector<std::vector<int64_t>> used_in_root(
      static_cast<size_t>(cfg.n_roots));
  {
    std::set<int64_t> used;
    for (const auto& prof : profiles)
      used.insert(prof.leaf_ids.begin(), prof.leaf_ids.end());
    for (int64_t leaf : used)
      used_in_root[static_cast<size_t>(leaf / per_root)].push_back(leaf);
  }
  const auto mutate_leaf = [&](int64_t leaf) {
    const auto& pool = used_in_root[static_cast<size_t>(leaf / per_root)];
    std::vector<double> w;
    w.reserve(pool.size());
    for (int64_t cand : pool)
      w.push_back(cand == leaf ? 0.0
                               : leaves[static_cast<size_t>(cand)].prevalence);
    if (std::count(w.begin(), w.end(), 0.0) == static_cast<int64_t>(w.size()))
      return leaf;
    std::discrete_distribution<int> dist(w.begin(), w.end());
    return pool[static_cast<size_t>(dist(rng))];
  };

  std::vector<int64_t> profile_of(static_cast<size_t>(n));
  for (auto& p : profile_of) p = static_cast<int64_t>(rng() % profiles.size());

  // pick the planted pairs up front; pair members share a profile so the
  // planted code is the one edge-relevant difference from ordinary mates
  std::vector<int64_t> planted_code_of(static_cast<size_t>(n), -1);
  std::vector<std::pair<int64_t, int64_t>> pair_rows;
  if (cfg.planted_pairs) {
    std::vector<int64_t> pool(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
    for (size_t i = pool.size(); i > 1; --i)
      std::swap(pool[i - 1], pool[rng() % i]);
    for (int64_t k = 0; k < cfg.n_planted_pairs; ++k) {
      const int64_t a = pool[static_cast<size_t>(2 * k)];
      const int64_t b = pool[static_cast<size_t>(2 * k + 1)];
      profile_of[static_cast<size_t>(b)] = profile_of[static_cast<size_t>(a)];
      planted_code_of[static_cast<size_t>(a)] = k;
      planted_code_of[static_cast<size_t>(b)] = k;
      pair_rows.emplace_back(a, b);
    }
  }

  SynthCohort out;
  out.records.resize(static_cast<size_t>(n));
  auto& truth = out.truth;
  truth.ids.reserve(static_cast<size_t>(n));
  truth.diag_effect.assign(static_cast<size_t>(n), 0.0);
  truth.severity.resize(static_cast<size_t>(n));
  truth.bias.resize(static_cast<size_t>(n));
  truth.los.resize(static_cast<size_t>(n));
  truth.ihm.resize(static_cast<size_t>(n));

  const std::vector<std::string> units = {"ccu", "med", "micu", "sicu"};

  for (int64_t i = 0; i < n; ++i) {
    auto& rec = out.records[static_cast<size_t>(i)];
    rec.id = patient_id(i, n);
    truth.ids.push_back(rec.id);

    // every patient carries the same number of codes, so neighbor rankings
    // are driven by shared-code rarity rather than by code counts
    const auto& prof = profiles[static_cast<size_t>(
        profile_of[static_cast<size_t>(i)])];
    auto leaf_ids = prof.leaf_ids;
    if (unif(rng) < cfg.mutation_rate) {
      // swap one code for a different one from the same chapter
      const size_t slot = rng() % leaf_ids.size();
      leaf_ids[slot] = mutate_leaf(leaf_ids[slot]);
    }
    for (int64_t li : leaf_ids) {
      const auto& leaf = leaves[static_cast<size_t>(li)];
      rec.diagnoses.emplace_back(io::split(leaf.path, '|'),
                                 std::floor(unif(rng) * 20.0));
      truth.diag_effect[static_cast<size_t>(i)] += leaf.effect;
    }
    truth.diag_effect[static_cast<size_t>(i)] += prof.gamma;
    if (planted_code_of[static_cast<size_t>(i)] >= 0) {
      const std::string code =
          "px" + std::to_string(planted_code_of[static_cast<size_t>(i)] + 1);
      rec.diagnoses.emplace_back(std::vector<std::string>{code},
                                 std::floor(unif(rng) * 20.0));
      truth.diag_effect[static_cast<size_t>(i)] += cfg.planted_effect;
    }

    truth.severity[static_cast<size_t>(i)] = cfg.severity_sd * gauss(rng);
    truth.bias[static_cast<size_t>(i)] = cfg.patient_bias_sd * gauss(rng);

    const double age = std::clamp(
        62.0 + 10.0 * truth.severity[static_cast<size_t>(i)] + 8.0 * gauss(rng),
        18.0, 95.0);
    rec.static_numeric["age"] = age;
    rec.static_numeric["hour_of_admission"] =
        static_cast<double>(rng() % 24);
    rec.static_categorical["unit"] = units[rng() % units.size()];
    rec.static_binary["elective"] = unif(rng) < 0.25 ? 1 : 0;
  }

  for (int64_t k = 0; k < static_cast<int64_t>(pair_rows.size()); ++k) {
    const auto [a, b] = pair_rows[static_cast<size_t>(k)];
    truth.pairs.emplace_back(out.records[static_cast<size_t>(a)].id,
                             out.records[static_cast<size_t>(b)].id,
                             "px" + std::to_string(k + 1));
  }

  for (int64_t i = 0; i < n; ++i) {
    auto& rec = out.records[static_cast<size_t>(i)];
    const double z = truth.diag_effect[static_cast<size_t>(i)];
    const double s = truth.severity[static_cast<size_t>(i)];
    const double b = truth.bias[static_cast<size_t>(i)];

    const double mu = cfg.los_baseline + z + s;
    const double los =
        std::max(1.0, std::exp(mu + cfg.los_noise_sd * gauss(rng)));
    const double p_death =
        1.0 / (1.0 + std::exp(-(cfg.ihm_bias + cfg.ihm_slope * (z + s))));
    rec.los = los;
    rec.ihm = unif(rng) < p_death ? 1 : 0;
    truth.los[static_cast<size_t>(i)] = los;
    truth.ihm[static_cast<size_t>(i)] = rec.ihm;

    auto& level = rec.series["level"];
    auto& hr = rec.series["hr"];
    for (int64_t h = 0; h < cfg.hours; ++h) {
      const bool observed = h == 0 || unif(rng) < cfg.obs_rate;
      if (observed)
        level.push_back({static_cast<double>(h),
                         z + s + b + cfg.step_noise_sd * gauss(rng)});
      if (h == 0 || unif(rng) < cfg.obs_rate)
        hr.push_back({static_cast<double>(h) + 0.5,
                      80.0 + 6.0 * s + 8.0 * gauss(rng)});
    }
  }

  for (const auto& rec : out.records) validate_record(rec);
  return out;
}

void save_cohort(const SynthCohort& cohort, const SynthConfig& cfg,
                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto open = [](const std::filesystem::path& p) {
    std::ofstream os(p);
    if (!os) throw IoError("cannot write " + p.string());
    return os;
  };

  {
    auto os = open(dir / "patients.csv");
    os << "patient_id,ihm,los,num:age,num:hour_of_admission,cat:unit,"
          "bin:elective\n";
    for (const auto& rec : cohort.records)
      os << rec.id << ',' << rec.ihm << ',' << io::fmt_double(rec.los) << ','
         << io::fmt_double(rec.static_numeric.at("age")) << ','
         << io::fmt_double(rec.static_numeric.at("hour_of_admission")) << ','
         << rec.static_categorical.at("unit") << ','
         << rec.static_binary.at("elective") << '\n';
  }
  {
    auto os = open(dir / "diagnoses.csv");
    os << "patient_id,path,hour\n";
    for (const auto& rec : cohort.records)
      for (const auto& [path, hour] : rec.diagnoses) {
        os << rec.id << ',';
        for (size_t l = 0; l < path.size(); ++l) {
          if (l) os << '|';
          os << path[l];
        }
        os << ',' << io::fmt_double(hour) << '\n';
      }
  }
  {
    auto os = open(dir / "timeseries.csv");
    os << "patient_id,feature,time,value\n";
    for (const auto& rec : cohort.records)
      for (const auto& [feature, obs] : rec.series)
        for (const auto& o : obs)
          os << rec.id << ',' << feature << ',' << io::fmt_double(o.time)
             << ',' << io::fmt_double(o.value) << '\n';
  }
  {
    auto os = open(dir / "ground_truth.csv");
    os << "patient_id,diag_effect,severity,bias,los,ihm\n";
    const auto& t = cohort.truth;
    for (size_t i = 0; i < t.ids.size(); ++i)
      os << t.ids[i] << ',' << io::fmt_double(t.diag_effect[i]) << ','
         << io::fmt_double(t.severity[i]) << ',' << io::fmt_double(t.bias[i])
         << ',' << io::fmt_double(t.los[i]) << ',' << t.ihm[i] << '\n';
  }
  if (!cohort.truth.pairs.empty()) {
    auto os = open(dir / "pairs.csv");
    os << "patient_a,patient_b,code\n";
    for (const auto& [a, b, code] : cohort.truth.pairs)
      os << a << ',' << b << ',' << code << '\n';
  }
  {
    nlohmann::json j;
    j["n_patients"] = cfg.n_patients;
    j["seed"] = cfg.seed;
    j["n_roots"] = cfg.n_roots;
    j["n_children"] = cfg.n_children;
    j["n_leaves"] = cfg.n_leaves;
    j["prevalence_max"] = cfg.prevalence_max;
    j["prevalence_decay"] = cfg.prevalence_decay;
    j["prevalence_min"] = cfg.prevalence_min;
    j["codes_per_patient"] = cfg.codes_per_patient;
    j["n_profiles"] = cfg.n_profiles;
    j["mutation_rate"] = cfg.mutation_rate;
    j["profile_effect_sd"] = cfg.profile_effect_sd;
    j["los_baseline"] = cfg.los_baseline;
    j["effect_scale"] = cfg.effect_scale;
    j["severity_sd"] = cfg.severity_sd;
    j["los_noise_sd"] = cfg.los_noise_sd;
    j["ihm_bias"] = cfg.ihm_bias;
    j["ihm_slope"] = cfg.ihm_slope;
    j["hours"] = cfg.hours;
    j["patient_bias_sd"] = cfg.patient_bias_sd;
    j["step_noise_sd"] = cfg.step_noise_sd;
    j["obs_rate"] = cfg.obs_rate;
    j["planted_pairs"] = cfg.planted_pairs;
    j["n_planted_pairs"] = cfg.n_planted_pairs;
    j["planted_effect"] = cfg.planted_effect;
    auto os = open(dir / "synth_config.json");
    os << j.dump(2) << '\n';
  }
}

double oracle_best_msle(const SynthConfig& cfg, const SynthTruth& truth) {
  // Gauss-Hermite nodes for the standard normal via the Golub-Welsch
  // tridiagonal eigenproblem.
  constexpr int kNodes = 40;
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(kNodes, kNodes);
  for (int k = 1; k < kNodes; ++k) {
    const double off = std::sqrt(static_cast<double>(k));
    jacobi(k, k - 1) = off;
    jacobi(k - 1, k) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  if (solver.info() != Eigen::Success)
    throw NumericError("quadrature eigensolver failed");
  const auto& nodes = solver.eigenvalues();
  std::vector<double> weights(kNodes);
  for (int k = 0; k < kNodes; ++k) {
    const double v0 = solver.eigenvectors()(0, k);
    weights[static_cast<size_t>(k)] = v0 * v0;
  }

  double total = 0.0;
  for (size_t i = 0; i < truth.ids.size(); ++i) {
    const double mu =
        cfg.los_baseline + truth.diag_effect[i] + truth.severity[i];
    double e1 = 0.0, e2 = 0.0;
    for (int k = 0; k < kNodes; ++k) {
      const double g = std::log1p(
          std::max(1.0, std::exp(mu + cfg.los_noise_sd * nodes(k))));
      e1 += weights[static_cast<size_t>(k)] * g;
      e2 += weights[static_cast<size_t>(k)] * g * g;
    }
    total += e2 - e1 * e1;
  }
  return total / static_cast<double>(truth.ids.size());
}

}  // namespace lgnn
