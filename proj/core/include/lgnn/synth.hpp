#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "lgnn/preprocess.hpp"

namespace lgnn {

struct SynthConfig {
  int64_t n_patients = 2000;
  uint64_t seed = 7;

  // diagnosis hierarchy: n_roots chapters, each with n_children groups,
  // each with n_leaves codes; leaf prevalence decays as a power law
  int64_t n_roots = 6;
  int64_t n_children = 3;
  int64_t n_leaves = 4;
  double prevalence_max = 0.35;
  double prevalence_decay = 1.5;
  double prevalence_min = 0.0005;
  int64_t codes_per_patient = 4;  // distinct roots, one leaf drawn per root

  // comorbidity profiles: patients inherit one of n_profiles shared code
  // sets, mutate a single code with probability mutation_rate, and pick up
  // a latent per-profile outcome shift with sd profile_effect_sd
  int64_t n_profiles = 120;
  double mutation_rate = 0.25;
  double profile_effect_sd = 0.7;

  // outcome model: log LOS = baseline + diag effect + severity + noise
  double los_baseline = 1.05;
  double effect_scale = 0.55;   // leaf effects grow as prevalence shrinks
  double severity_sd = 0.45;
  double los_noise_sd = 0.18;
  double ihm_bias = -2.2;
  double ihm_slope = 1.6;

  // time-series generator
  int64_t hours = 30;
  double patient_bias_sd = 0.7;  // constant offset on the level channel,
                                 // uncorrelated with the outcome
  double step_noise_sd = 0.25;
  double obs_rate = 0.75;        // chance a grid hour carries an observation

  // attention-planted mode: each planted leaf is shared by exactly two
  // patients and dominates their outcome
  bool planted_pairs = false;
  int64_t n_planted_pairs = 40;
  double planted_effect = 2.5;

  void validate() const;
};

struct SynthTruth {
  std::vector<std::string> ids;
  std::vector<double> diag_effect;  // z_i
  std::vector<double> severity;     // s_i
  std::vector<double> bias;         // b_i, level-channel offset
  std::vector<double> los;
  std::vector<int> ihm;
  // planted mode: (patient a, patient b, shared leaf code) per pair
  std::vector<std::tuple<std::string, std::string, std::string>> pairs;
};

struct SynthCohort {
  std::vector<PatientRecord> records;
  SynthTruth truth;
};

SynthCohort generate(const SynthConfig& cfg);

// Writes patients.csv, diagnoses.csv, timeseries.csv plus ground_truth.csv
// and synth_config.json.
void save_cohort(const SynthCohort& cohort, const SynthConfig& cfg,
                 const std::filesystem::path& dir);

// Best achievable MSLE on this generator: E[(log1p(LOS) - log1p(E*[LOS]))^2]
// under the true conditional distribution, by Gauss-Hermite quadrature.
double oracle_best_msle(const SynthConfig& cfg, const SynthTruth& truth);

}  // namespace lgnn
