#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lgnn/errors.hpp"

namespace lgnn {

struct Observation {
  double time = 0.0;  // hours since admission
  double value = 0.0;
};

struct PatientRecord {
  std::string id;
  std::map<std::string, double> static_numeric;  // NaN marks a missing value
  std::map<std::string, std::string> static_categorical;
  std::map<std::string, int> static_binary;
  // (hierarchical code path, record hour)
  std::vector<std::pair<std::vector<std::string>, double>> diagnoses;
  std::map<std::string, std::vector<Observation>> series;
  int ihm = 0;
  double los = 0.0;  // days
};

// Cohort rules: LOS >= 1 day, at least one observation, strictly
// increasing timestamps per series. Throws DataError naming the record.
void validate_record(const PatientRecord& rec);

struct FeatureScaler {
  double p5 = 0.0;
  double p95 = 0.0;
  double mean = 0.0;  // training mean, used for missing-value imputation
};

using ScalerParams = std::map<std::string, FeatureScaler>;

// Empirical percentile with linear interpolation between order statistics.
double percentile(std::vector<double> values, double p);

ScalerParams fit_scalers(
    const std::map<std::string, std::vector<double>>& feature_values);

// s(x) = 2 (x - p5) / (p95 - p5) - 1, clipped to [-4, 4]; 0 when p5 == p95.
double apply_scaler(double x, const FeatureScaler& s);
// Inverse of the affine map on the unclipped range.
double unapply_scaler(double s, const FeatureScaler& p);

struct ResampledSeries {
  std::vector<double> values;  // one per grid hour
  std::vector<double> mask;    // 1 if any observation at or before the hour
};

// Hourly grid forward fill; grid points before the first observation take
// the first observed value with mask 0.
ResampledSeries resample_hourly(std::span<const Observation> obs, int horizon);

struct DiagnosisVocabulary {
  // code = path prefix joined by '|'
  std::map<std::string, int64_t> columns;
  std::vector<std::string> codes;    // column -> code
  std::vector<int64_t> counts;       // training-cohort occurrence per column
  std::vector<std::string> parents;  // immediate parent code, "" for level 1
  double threshold = 0.005;

  int64_t size() const { return static_cast<int64_t>(codes.size()); }
};

struct DiagnosisMatrix {
  int64_t n = 0;
  int64_t m = 0;
  std::vector<std::vector<int64_t>> rows;  // sorted set columns per patient

  // occurrence d_mu per column over the encoded cohort
  std::vector<int64_t> column_counts() const;
};

// Vocabulary is fit on the training records only (no leakage); only
// diagnoses recorded before hour `cutoff_hour` count.
DiagnosisVocabulary fit_diagnosis_vocabulary(
    std::span<const PatientRecord> train_records, double threshold,
    double cutoff_hour = 24.0);

DiagnosisMatrix encode_diagnoses(std::span<const PatientRecord> records,
                                 const DiagnosisVocabulary& vocab,
                                 double cutoff_hour = 24.0);

using CategoryMaps = std::map<std::string, std::vector<std::string>>;

struct SplitResult {
  std::vector<std::string> train, val, test;
};

// Patient-level disjoint partition: floor(train), floor(val), remainder to
// test; deterministic shuffle for a given seed.
SplitResult split_cohort(std::vector<std::string> ids,
                         std::array<double, 3> ratios, uint64_t seed);

// Everything the model consumes, plus the split, in one place.
struct Dataset {
  std::vector<std::string> ids;  // row -> patient id, sorted
  int64_t n = 0;
  int64_t t_steps = 24;
  int64_t channels = 0;                // per-hour model channels
  std::vector<std::string> channel_names;
  std::vector<double> series;          // n * t_steps * channels
  int64_t static_width = 0;            // includes the diagnosis block
  int64_t diag_offset = 0;
  std::vector<double> statics;         // n * static_width
  std::vector<double> ihm, los;        // labels per row
  std::vector<int64_t> train_rows, val_rows, test_rows;
  DiagnosisMatrix diag;
  DiagnosisVocabulary vocab;
};

struct PreprocessConfig {
  std::array<double, 3> split_ratios{0.7, 0.15, 0.15};
  uint64_t split_seed = 0;
  double diag_threshold = 0.005;
  double diag_cutoff_hour = 24.0;
  int horizon = 24;
};

// Static feature vector for one record (without the diagnosis block):
// scaled numerics, missing indicators, one-hot categoricals, binaries, in
// sorted-name order within each block. Unseen categories encode all-zero.
std::vector<double> encode_static(const PatientRecord& rec,
                                  const ScalerParams& scalers,
                                  const CategoryMaps& cats,
                                  std::span<const std::string> numeric_names,
                                  std::span<const std::string> cat_names,
                                  std::span<const std::string> bin_names);

Dataset preprocess(std::vector<PatientRecord> records,
                   const PreprocessConfig& cfg);

// Ingestion of the three delimiter-separated input files.
std::vector<PatientRecord> load_records(const std::filesystem::path& dir);

void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace lgnn
