#include "lgnn/preprocess.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "lgnn/io.hpp"

namespace lgnn {

namespace {

std::string join_path(std::span<const std::string> levels, size_t upto) {
  std::string s;
  for (size_t i = 0; i < upto; ++i) {
    if (i) s += '|';
    s += levels[i];
  }
  return s;
}

}  // namespace

void validate_record(const PatientRecord& rec) {
  if (rec.los < 1.0)
    throw DataError("patient " + rec.id + ": LOS " + std::to_string(rec.los) +
                    " below the 1-day cohort minimum");
  size_t n_obs = 0;
  for (const auto& [name, obs] : rec.series) {
    n_obs += obs.size();
    for (size_t i = 1; i < obs.size(); ++i)
      if (!(obs[i].time > obs[i - 1].time))
        throw DataError("patient " + rec.id + ": series '" + name +
                        "' timestamps not strictly increasing");
    for (const auto& o : obs)
      if (o.time < 0.0)
        throw DataError("patient " + rec.id + ": negative timestamp in '" +
                        name + "'");
  }
  if (n_obs == 0)
    throw DataError("patient " + rec.id + ": no time-series observations");
  for (const auto& [path, hour] : rec.diagnoses) {
    if (path.empty())
      throw DataError("patient " + rec.id + ": empty diagnosis path");
    for (const auto& level : path)
      if (level.empty())
        throw DataError("patient " + rec.id +
                        ": malformed diagnosis path with empty level");
    (void)hour;
  }
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw ContractError("percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

ScalerParams fit_scalers(
    const std::map<std::string, std::vector<double>>& feature_values) {
  ScalerParams out;
  for (const auto& [name, raw] : feature_values) {
    std::vector<double> finite;
    finite.reserve(raw.size());
    for (double v : raw)
      if (std::isfinite(v)) finite.push_back(v);
    if (finite.empty())
      throw DataError("feature '" + name +
                      "' has no observations in the training split");
    FeatureScaler s;
    s.p5 = percentile(finite, 0.05);
    s.p95 = percentile(finite, 0.95);
    double sum = 0.0;
    for (double v : finite) sum += v;
    s.mean = sum / static_cast<double>(finite.size());
    out[name] = s;
  }
  return out;
}

double apply_scaler(double x, const FeatureScaler& s) {
  if (s.p5 == s.p95) return 0.0;
  const double v = 2.0 * (x - s.p5) / (s.p95 - s.p5) - 1.0;
  return std::clamp(v, -4.0, 4.0);
}

double unapply_scaler(double s, const FeatureScaler& p) {
  return p.p5 + (s + 1.0) * (p.p95 - p.p5) / 2.0;
}

ResampledSeries resample_hourly(std::span<const Observation> obs, int horizon) {
  if (obs.empty())
    throw ContractError("resample_hourly on an empty series (cohort rule "
                        "guarantees at least one observation)");
  ResampledSeries out;
  out.values.resize(static_cast<size_t>(horizon));
  out.mask.resize(static_cast<size_t>(horizon));
  // grid point h covers the end of hour h, so index i holds hour i + 1
  size_t next = 0;
  double last = obs.front().value;
  bool seen = false;
  for (int h = 0; h < horizon; ++h) {
    while (next < obs.size() && obs[next].time <= static_cast<double>(h + 1)) {
      last = obs[next].value;
      seen = true;
      ++next;
    }
    out.values[static_cast<size_t>(h)] = last;
    out.mask[static_cast<size_t>(h)] = seen ? 1.0 : 0.0;
  }
  return out;
}

DiagnosisVocabulary fit_diagnosis_vocabulary(
    std::span<const PatientRecord> train_records, double threshold,
    double cutoff_hour) {
  std::map<std::string, int64_t> counts;
  for (const auto& rec : train_records) {
    std::set<std::string> codes;
    for (const auto& [path, hour] : rec.diagnoses) {
      if (hour >= cutoff_hour) continue;
      for (size_t L = 1; L <= path.size(); ++L) codes.insert(join_path(path, L));
    }
    for (const auto& c : codes) ++counts[c];
  }
  const auto n_train = static_cast<double>(train_records.size());
  DiagnosisVocabulary vocab;
  vocab.threshold = threshold;
  for (const auto& [code, count] : counts) {
    if (static_cast<double>(count) / n_train >= threshold) {
      vocab.columns[code] = static_cast<int64_t>(vocab.codes.size());
      vocab.codes.push_back(code);
      vocab.counts.push_back(count);
      const auto pos = code.rfind('|');
      vocab.parents.push_back(pos == std::string::npos ? ""
                                                       : code.substr(0, pos));
    }
  }
  return vocab;
}

DiagnosisMatrix encode_diagnoses(std::span<const PatientRecord> records,
                                 const DiagnosisVocabulary& vocab,
                                 double cutoff_hour) {
  DiagnosisMatrix mat;
  mat.n = static_cast<int64_t>(records.size());
  mat.m = vocab.size();
  mat.rows.resize(records.size());
  for (size_t r = 0; r < records.size(); ++r) {
    std::set<int64_t> cols;
    for (const auto& [path, hour] : records[r].diagnoses) {
      if (hour >= cutoff_hour) continue;
      if (path.empty())
        throw DataError("patient " + records[r].id + ": empty diagnosis path");
      for (size_t L = 1; L <= path.size(); ++L) {
        const auto it = vocab.columns.find(join_path(path, L));
        if (it != vocab.columns.end()) cols.insert(it->second);
      }
    }
    mat.rows[r].assign(cols.begin(), cols.end());
  }
  return mat;
}

std::vector<int64_t> DiagnosisMatrix::column_counts() const {
  std::vector<int64_t> d(static_cast<size_t>(m), 0);
  for (const auto& row : rows)
    for (int64_t c : row) ++d[static_cast<size_t>(c)];
  return d;
}

SplitResult split_cohort(std::vector<std::string> ids,
                         std::array<double, 3> ratios, uint64_t seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1, got " + std::to_string(total));
  std::sort(ids.begin(), ids.end());
  // Fisher-Yates with a fixed generator so the partition is reproducible
  std::mt19937_64 rng(seed);
  for (size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[rng() % i]);
  const auto n = ids.size();
  const auto n_train = static_cast<size_t>(std::floor(ratios[0] * static_cast<double>(n)));
  const auto n_val = static_cast<size_t>(std::floor(ratios[1] * static_cast<double>(n)));
  SplitResult out;
  out.train.assign(ids.begin(), ids.begin() + static_cast<int64_t>(n_train));
  out.val.assign(ids.begin() + static_cast<int64_t>(n_train),
                 ids.begin() + static_cast<int64_t>(n_train + n_val));
  out.test.assign(ids.begin() + static_cast<int64_t>(n_train + n_val), ids.end());
  return out;
}

std::vector<double> encode_static(const PatientRecord& rec,
                                  const ScalerParams& scalers,
                                  const CategoryMaps& cats,
                                  std::span<const std::string> numeric_names,
                                  std::span<const std::string> cat_names,
                                  std::span<const std::string> bin_names) {
  std::vector<double> x;
  for (const auto& name : numeric_names) {
    const auto sit = scalers.find(name);
    if (sit == scalers.end())
      throw ContractError("no scaler fitted for feature '" + name + "'");
    const auto vit = rec.static_numeric.find(name);
    const bool missing =
        vit == rec.static_numeric.end() || !std::isfinite(vit->second);
    const double raw = missing ? sit->second.mean : vit->second;
    x.push_back(apply_scaler(raw, sit->second));
    x.push_back(missing ? 1.0 : 0.0);  // null indicator
  }
  for (const auto& name : cat_names) {
    const auto cit = cats.find(name);
    if (cit == cats.end())
      throw ContractError("no category map for feature '" + name + "'");
    const auto vit = rec.static_categorical.find(name);
    for (const auto& cat : cit->second)
      x.push_back(vit != rec.static_categorical.end() && vit->second == cat
                      ? 1.0
                      : 0.0);
  }
  for (const auto& name : bin_names) {
    const auto vit = rec.static_binary.find(name);
    x.push_back(vit != rec.static_binary.end() && vit->second != 0 ? 1.0 : 0.0);
  }
  return x;
}

Dataset preprocess(std::vector<PatientRecord> records,
                   const PreprocessConfig& cfg) {
  if (records.empty()) throw DataError("no patient records to preprocess");
  for (const auto& rec : records) validate_record(rec);
  std::sort(records.begin(), records.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  for (size_t i = 1; i < records.size(); ++i)
    if (records[i].id == records[i - 1].id)
      throw DataError("duplicate patient id '" + records[i].id + "'");

  Dataset ds;
  ds.n = static_cast<int64_t>(records.size());
  ds.t_steps = cfg.horizon;
  std::map<std::string, int64_t> row_of;
  for (size_t i = 0; i < records.size(); ++i) {
    ds.ids.push_back(records[i].id);
    row_of[records[i].id] = static_cast<int64_t>(i);
  }

  std::vector<std::string> all_ids = ds.ids;
  const SplitResult split = split_cohort(all_ids, cfg.split_ratios, cfg.split_seed);
  for (const auto& id : split.train) ds.train_rows.push_back(row_of.at(id));
  for (const auto& id : split.val) ds.val_rows.push_back(row_of.at(id));
  for (const auto& id : split.test) ds.test_rows.push_back(row_of.at(id));
  std::sort(ds.train_rows.begin(), ds.train_rows.end());
  std::sort(ds.val_rows.begin(), ds.val_rows.end());
  std::sort(ds.test_rows.begin(), ds.test_rows.end());

  std::vector<const PatientRecord*> train;
  for (int64_t r : ds.train_rows) train.push_back(&records[static_cast<size_t>(r)]);

  // feature name inventories (union over all records, fixed order)
  std::set<std::string> num_set, cat_set, bin_set, ts_set;
  for (const auto& rec : records) {
    for (const auto& [k, v] : rec.static_numeric) num_set.insert(k);
    for (const auto& [k, v] : rec.static_categorical) cat_set.insert(k);
    for (const auto& [k, v] : rec.static_binary) bin_set.insert(k);
    for (const auto& [k, v] : rec.series) ts_set.insert(k);
  }
  std::vector<std::string> num_names(num_set.begin(), num_set.end());
  std::vector<std::string> cat_names(cat_set.begin(), cat_set.end());
  std::vector<std::string> bin_names(bin_set.begin(), bin_set.end());
  std::vector<std::string> ts_names(ts_set.begin(), ts_set.end());

  // scalers and category maps: training split only
  std::map<std::string, std::vector<double>> num_train, ts_train;
  CategoryMaps cats;
  {
    std::map<std::string, std::set<std::string>> cat_values;
    for (const auto* rec : train) {
      for (const auto& name : num_names) {
        const auto it = rec->static_numeric.find(name);
        if (it != rec->static_numeric.end() && std::isfinite(it->second))
          num_train[name].push_back(it->second);
      }
      for (const auto& [k, v] : rec->static_categorical)
        cat_values[k].insert(v);
      for (const auto& [k, obs] : rec->series)
        for (const auto& o : obs) ts_train[k].push_back(o.value);
    }
    for (const auto& name : num_names)
      if (!num_train.count(name))
        throw DataError("feature '" + name +
                        "' has no observations in the training split");
    for (const auto& name : ts_names)
      if (!ts_train.count(name))
        throw DataError("time-series feature '" + name +
                        "' has no observations in the training split");
    for (const auto& [k, vals] : cat_values)
      cats[k] = std::vector<std::string>(vals.begin(), vals.end());
    for (const auto& name : cat_names)
      if (!cats.count(name)) cats[name] = {};
  }
  const ScalerParams num_scalers = fit_scalers(num_train);
  const ScalerParams ts_scalers = fit_scalers(ts_train);

  // diagnosis vocabulary (train only) and multi-hot rows (all patients)
  {
    std::vector<PatientRecord> train_copy;
    train_copy.reserve(train.size());
    for (const auto* rec : train) train_copy.push_back(*rec);
    ds.vocab = fit_diagnosis_vocabulary(train_copy, cfg.diag_threshold,
                                        cfg.diag_cutoff_hour);
  }
  ds.diag = encode_diagnoses(records, ds.vocab, cfg.diag_cutoff_hour);

  // statics: encoded block + diagnosis multi-hot
  {
    std::vector<double> first =
        encode_static(records[0], num_scalers, cats, num_names, cat_names,
                      bin_names);
    ds.diag_offset = static_cast<int64_t>(first.size());
    ds.static_width = ds.diag_offset + ds.vocab.size();
    ds.statics.assign(static_cast<size_t>(ds.n * ds.static_width), 0.0);
    for (int64_t r = 0; r < ds.n; ++r) {
      const auto x = encode_static(records[static_cast<size_t>(r)], num_scalers,
                                   cats, num_names, cat_names, bin_names);
      std::copy(x.begin(), x.end(),
                ds.statics.begin() + r * ds.static_width);
      for (int64_t c : ds.diag.rows[static_cast<size_t>(r)])
        ds.statics[static_cast<size_t>(r * ds.static_width + ds.diag_offset + c)] = 1.0;
    }
  }

  // time-series tensor: scaled value + mask channel per feature, plus
  // time-in-ICU and time-of-day channels
  const auto f = static_cast<int64_t>(ts_names.size());
  ds.channels = 2 * f + 2;
  for (const auto& name : ts_names) ds.channel_names.push_back(name);
  for (const auto& name : ts_names) ds.channel_names.push_back(name + ":mask");
  ds.channel_names.push_back("time_in_icu");
  ds.channel_names.push_back("time_of_day");
  ds.series.assign(static_cast<size_t>(ds.n * ds.t_steps * ds.channels), 0.0);
  for (int64_t r = 0; r < ds.n; ++r) {
    const auto& rec = records[static_cast<size_t>(r)];
    double admit_hour = 0.0;
    if (const auto it = rec.static_numeric.find("hour_of_admission");
        it != rec.static_numeric.end() && std::isfinite(it->second))
      admit_hour = it->second;
    for (int64_t fi = 0; fi < f; ++fi) {
      const auto sit = rec.series.find(ts_names[static_cast<size_t>(fi)]);
      const auto& scaler = ts_scalers.at(ts_names[static_cast<size_t>(fi)]);
      if (sit != rec.series.end() && !sit->second.empty()) {
        const auto rs = resample_hourly(sit->second, cfg.horizon);
        for (int64_t h = 0; h < ds.t_steps; ++h) {
          const auto base = (r * ds.t_steps + h) * ds.channels;
          ds.series[static_cast<size_t>(base + fi)] =
              apply_scaler(rs.values[static_cast<size_t>(h)], scaler);
          ds.series[static_cast<size_t>(base + f + fi)] =
              rs.mask[static_cast<size_t>(h)];
        }
      } else {
        // feature absent for this patient: impute the training mean, mask 0
        const double v = apply_scaler(scaler.mean, scaler);
        for (int64_t h = 0; h < ds.t_steps; ++h)
          ds.series[static_cast<size_t>((r * ds.t_steps + h) * ds.channels + fi)] = v;
      }
    }
    for (int64_t h = 0; h < ds.t_steps; ++h) {
      const auto base = (r * ds.t_steps + h) * ds.channels;
      ds.series[static_cast<size_t>(base + 2 * f)] =
          static_cast<double>(h) / 24.0;
      const double tod = std::fmod(admit_hour + static_cast<double>(h), 24.0);
      ds.series[static_cast<size_t>(base + 2 * f + 1)] = tod / 12.0 - 1.0;
    }
    ds.ihm.push_back(static_cast<double>(rec.ihm));
    ds.los.push_back(rec.los);
  }
  return ds;
}

std::vector<PatientRecord> load_records(const std::filesystem::path& dir) {
  const auto patients = io::read_csv(dir / "patients.csv");
  const auto diagnoses = io::read_csv(dir / "diagnoses.csv");
  const auto timeseries = io::read_csv(dir / "timeseries.csv");

  const auto id_col = patients.require_column("patient_id", "patients.csv");
  const auto ihm_col = patients.require_column("ihm", "patients.csv");
  const auto los_col = patients.require_column("los", "patients.csv");

  std::map<std::string, PatientRecord> by_id;
  for (const auto& row : patients.rows) {
    PatientRecord rec;
    rec.id = row[static_cast<size_t>(id_col)];
    if (by_id.count(rec.id))
      throw DataError("patients.csv: duplicate patient id '" + rec.id + "'");
    rec.ihm = static_cast<int>(
        io::parse_double(row[static_cast<size_t>(ihm_col)], "patients.csv ihm"));
    rec.los = io::parse_double(row[static_cast<size_t>(los_col)],
                               "patients.csv los");
    for (size_t c = 0; c < patients.header.size(); ++c) {
      const auto& h = patients.header[c];
      if (h.starts_with("num:")) {
        const auto name = h.substr(4);
        if (row[c].empty())
          rec.static_numeric[name] = std::nan("");
        else
          rec.static_numeric[name] =
              io::parse_double(row[c], "patients.csv " + name);
      } else if (h.starts_with("cat:")) {
        rec.static_categorical[h.substr(4)] = row[c];
      } else if (h.starts_with("bin:")) {
        rec.static_binary[h.substr(4)] = row[c] == "1" ? 1 : 0;
      }
    }
    by_id.emplace(rec.id, std::move(rec));
  }

  {
    const auto pid = diagnoses.require_column("patient_id", "diagnoses.csv");
    const auto path_col = diagnoses.require_column("path", "diagnoses.csv");
    const auto hour_col = diagnoses.require_column("hour", "diagnoses.csv");
    for (const auto& row : diagnoses.rows) {
      const auto it = by_id.find(row[static_cast<size_t>(pid)]);
      if (it == by_id.end())
        throw DataError("diagnoses.csv: unknown patient id '" +
                        row[static_cast<size_t>(pid)] + "'");
      auto levels = io::split(row[static_cast<size_t>(path_col)], '|');
      for (const auto& level : levels)
        if (level.empty())
          throw DataError("diagnoses.csv: malformed path '" +
                          row[static_cast<size_t>(path_col)] + "' for patient " +
                          it->first);
      it->second.diagnoses.emplace_back(
          std::move(levels),
          io::parse_double(row[static_cast<size_t>(hour_col)], "diagnoses.csv hour"));
    }
  }

  {
    const auto pid = timeseries.require_column("patient_id", "timeseries.csv");
    const auto feat = timeseries.require_column("feature", "timeseries.csv");
    const auto time_col = timeseries.require_column("time", "timeseries.csv");
    const auto val_col = timeseries.require_column("value", "timeseries.csv");
    for (const auto& row : timeseries.rows) {
      const auto it = by_id.find(row[static_cast<size_t>(pid)]);
      if (it == by_id.end())
        throw DataError("timeseries.csv: unknown patient id '" +
                        row[static_cast<size_t>(pid)] + "'");
      it->second.series[row[static_cast<size_t>(feat)]].push_back(
          {io::parse_double(row[static_cast<size_t>(time_col)], "timeseries.csv time"),
           io::parse_double(row[static_cast<size_t>(val_col)], "timeseries.csv value")});
    }
  }

  std::vector<PatientRecord> out;
  out.reserve(by_id.size());
  for (auto& [id, rec] : by_id) out.push_back(std::move(rec));
  return out;
}

namespace {

void write_matrix(const std::filesystem::path& path,
                  std::span<const double> values, int64_t rows, int64_t cols) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) {
      if (c) os << ' ';
      os << io::fmt_double(values[static_cast<size_t>(r * cols + c)]);
    }
    os << '\n';
  }
}

std::vector<double> read_matrix(const std::filesystem::path& path,
                                int64_t rows, int64_t cols) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<double> out(static_cast<size_t>(rows * cols));
  for (auto& v : out)
    if (!(is >> v)) throw DataError("truncated matrix file " + path.string());
  return out;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta{{"n", ds.n},
                      {"t_steps", ds.t_steps},
                      {"channels", ds.channels},
                      {"channel_names", ds.channel_names},
                      {"static_width", ds.static_width},
                      {"diag_offset", ds.diag_offset},
                      {"m", ds.vocab.size()}};
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';

  {
    std::ofstream os(dir / "ids.txt");
    for (const auto& id : ds.ids) os << id << '\n';
  }
  write_matrix(dir / "static.txt", ds.statics, ds.n, ds.static_width);
  write_matrix(dir / "series.txt", ds.series, ds.n, ds.t_steps * ds.channels);
  {
    std::ofstream os(dir / "labels.txt");
    for (int64_t r = 0; r < ds.n; ++r)
      os << io::fmt_double(ds.ihm[static_cast<size_t>(r)]) << ' '
         << io::fmt_double(ds.los[static_cast<size_t>(r)]) << '\n';
  }
  {
    std::ofstream os(dir / "diag.coo");
    os << ds.diag.n << ' ' << ds.diag.m << '\n';
    for (int64_t r = 0; r < ds.diag.n; ++r)
      for (int64_t c : ds.diag.rows[static_cast<size_t>(r)])
        os << r << ' ' << c << '\n';
  }
  {
    std::ofstream os(dir / "vocab.txt");
    for (int64_t c = 0; c < ds.vocab.size(); ++c)
      os << ds.vocab.codes[static_cast<size_t>(c)] << '\t' << c << '\t'
         << ds.vocab.counts[static_cast<size_t>(c)] << '\t'
         << (ds.vocab.parents[static_cast<size_t>(c)].empty()
                 ? "-"
                 : ds.vocab.parents[static_cast<size_t>(c)])
         << '\n';
  }
  {
    std::ofstream os(dir / "split.txt");
    for (int64_t r : ds.train_rows) os << r << " train\n";
    for (int64_t r : ds.val_rows) os << r << " val\n";
    for (int64_t r : ds.test_rows) os << r << " test\n";
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream meta_is(dir / "meta.json");
  if (!meta_is) throw IoError("cannot open " + (dir / "meta.json").string());
  nlohmann::json meta = nlohmann::json::parse(meta_is);

  Dataset ds;
  ds.n = meta.at("n").get<int64_t>();
  ds.t_steps = meta.at("t_steps").get<int64_t>();
  ds.channels = meta.at("channels").get<int64_t>();
  ds.channel_names = meta.at("channel_names").get<std::vector<std::string>>();
  ds.static_width = meta.at("static_width").get<int64_t>();
  ds.diag_offset = meta.at("diag_offset").get<int64_t>();
  const auto m = meta.at("m").get<int64_t>();

  {
    std::ifstream is(dir / "ids.txt");
    std::string line;
    while (std::getline(is, line))
      if (!line.empty()) ds.ids.push_back(line);
    if (static_cast<int64_t>(ds.ids.size()) != ds.n)
      throw DataError("ids.txt row count does not match meta");
  }
  ds.statics = read_matrix(dir / "static.txt", ds.n, ds.static_width);
  ds.series = read_matrix(dir / "series.txt", ds.n, ds.t_steps * ds.channels);
  {
    std::ifstream is(dir / "labels.txt");
    double a, b;
    while (is >> a >> b) {
      ds.ihm.push_back(a);
      ds.los.push_back(b);
    }
    if (static_cast<int64_t>(ds.ihm.size()) != ds.n)
      throw DataError("labels.txt row count does not match meta");
  }
  {
    std::ifstream is(dir / "diag.coo");
    if (!is) throw IoError("cannot open " + (dir / "diag.coo").string());
    is >> ds.diag.n >> ds.diag.m;
    if (ds.diag.m != m) throw DataError("diag.coo vocabulary size mismatch");
    ds.diag.rows.resize(static_cast<size_t>(ds.diag.n));
    int64_t r, c;
    while (is >> r >> c) {
      if (r < 0 || r >= ds.diag.n || c < 0 || c >= ds.diag.m)
        throw DataError("diag.coo entry out of range");
      ds.diag.rows[static_cast<size_t>(r)].push_back(c);
    }
  }
  {
    std::ifstream is(dir / "vocab.txt");
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto parts = io::split(line, '\t');
      if (parts.size() != 4) throw DataError("vocab.txt: malformed line");
      ds.vocab.columns[parts[0]] = static_cast<int64_t>(ds.vocab.codes.size());
      ds.vocab.codes.push_back(parts[0]);
      ds.vocab.counts.push_back(
          static_cast<int64_t>(io::parse_double(parts[2], "vocab.txt count")));
      ds.vocab.parents.push_back(parts[3] == "-" ? "" : parts[3]);
    }
    if (ds.vocab.size() != m) throw DataError("vocab.txt size mismatch");
  }
  {
    std::ifstream is(dir / "split.txt");
    int64_t r;
    std::string phase;
    while (is >> r >> phase) {
      if (phase == "train")
        ds.train_rows.push_back(r);
      else if (phase == "val")
        ds.val_rows.push_back(r);
      else if (phase == "test")
        ds.test_rows.push_back(r);
      else
        throw DataError("split.txt: unknown phase '" + phase + "'");
    }
  }
  return ds;
}

}  // namespace lgnn
