#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "lgnn/graph.hpp"
#include "lgnn/io.hpp"
#include "lgnn/metrics.hpp"
#include "lgnn/model.hpp"
#include "lgnn/preprocess.hpp"
#include "lgnn/synth.hpp"
#include "lgnn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw lgnn::IoError("cannot write " + p.string());
  return os;
}

json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw lgnn::IoError("cannot read " + p.string());
  json j;
  is >> j;
  return j;
}

// ---------------------------------------------------------------- generate

int run_generate(const lgnn::SynthConfig& cfg, const fs::path& out) {
  const auto cohort = lgnn::generate(cfg);
  lgnn::save_cohort(cohort, cfg, out);

  // prevalence summary for qualitative inspection of the tail shape
  std::map<std::string, int64_t> counts;
  for (const auto& rec : cohort.records)
    for (const auto& [path, hour] : rec.diagnoses) {
      std::string code;
      for (const auto& level : path) {
        code += code.empty() ? level : "|" + level;
      }
      ++counts[code];
    }
  std::vector<double> per_code;
  per_code.reserve(counts.size());
  for (const auto& [code, c] : counts)
    per_code.push_back(static_cast<double>(c));
  std::sort(per_code.begin(), per_code.end());
  const double mean =
      per_code.empty()
          ? 0.0
          : std::accumulate(per_code.begin(), per_code.end(), 0.0) /
                static_cast<double>(per_code.size());
  const double median =
      per_code.empty() ? 0.0 : per_code[per_code.size() / 2];
  std::cout << "patients " << cfg.n_patients << ", leaf codes assigned "
            << counts.size() << "\n"
            << "patients per code: mean " << mean << ", median " << median
            << ", max " << (per_code.empty() ? 0.0 : per_code.back()) << "\n"
            << "oracle best msle "
            << lgnn::io::fmt_double(lgnn::oracle_best_msle(cfg, cohort.truth))
            << "\n";
  return 0;
}

// ------------------------------------------------------------- train utils

std::string model_label(const lgnn::ModelConfig& cfg) {
  std::string label;
  if (cfg.gnn == lgnn::GnnKind::None) {
    label = "LSTM";
  } else {
    std::string g = lgnn::gnn_kind_name(cfg.gnn);
    for (auto& ch : g) ch = static_cast<char>(std::toupper(ch));
    label = (cfg.dynamic_graph ? "Dyn. " : "LSTM-") + g;
  }
  if (!cfg.diag_in_static) label += "*";
  return label;
}

json model_config_json(const lgnn::ModelConfig& m) {
  json j;
  j["task"] = lgnn::task_name(m.task);
  j["gnn"] = lgnn::gnn_kind_name(m.gnn);
  j["lstm_hidden"] = m.lstm_hidden;
  j["lstm_layers"] = m.lstm_layers;
  j["gnn_hidden"] = m.gnn_hidden;
  j["gnn_out"] = m.gnn_out;
  j["gat_heads"] = m.gat_heads;
  j["gat_out_heads"] = m.gat_out_heads;
  j["mpnn_steps"] = m.mpnn_steps;
  j["static_hidden"] = m.static_hidden;
  j["dropout"] = m.dropout;
  j["alpha"] = m.alpha;
  j["diag_in_static"] = m.diag_in_static;
  j["dynamic_graph"] = m.dynamic_graph;
  j["dynamic_k"] = m.dynamic_k;
  j["in_channels"] = m.in_channels;
  j["static_width"] = m.static_width;
  return j;
}

lgnn::ModelConfig model_config_from_json(const json& j) {
  lgnn::ModelConfig m;
  m.task = lgnn::parse_task(j.at("task").get<std::string>());
  m.gnn = lgnn::parse_gnn_kind(j.at("gnn").get<std::string>());
  m.lstm_hidden = j.at("lstm_hidden");
  m.lstm_layers = j.at("lstm_layers");
  m.gnn_hidden = j.at("gnn_hidden");
  m.gnn_out = j.at("gnn_out");
  m.gat_heads = j.at("gat_heads");
  m.gat_out_heads = j.at("gat_out_heads");
  m.mpnn_steps = j.at("mpnn_steps");
  m.static_hidden = j.at("static_hidden");
  m.dropout = j.at("dropout");
  m.alpha = j.at("alpha");
  m.diag_in_static = j.at("diag_in_static");
  m.dynamic_graph = j.at("dynamic_graph");
  m.dynamic_k = j.at("dynamic_k");
  m.in_channels = j.at("in_channels");
  m.static_width = j.at("static_width");
  return m;
}

json train_config_json(const lgnn::TrainConfig& t) {
  json j;
  j["batch_size"] = t.batch_size;
  j["lr"] = t.lr;
  j["weight_decay"] = t.weight_decay;
  j["sample_size"] = t.sample_size;
  j["max_epochs"] = t.max_epochs;
  j["patience"] = t.patience;
  j["seed"] = t.seed;
  j["alpha"] = t.alpha;
  j["grad_clip"] = t.grad_clip;
  return j;
}

lgnn::TrainConfig train_config_from_json(const json& j) {
  lgnn::TrainConfig t;
  t.batch_size = j.at("batch_size");
  t.lr = j.at("lr");
  t.weight_decay = j.at("weight_decay");
  t.sample_size = j.at("sample_size");
  t.max_epochs = j.at("max_epochs");
  t.patience = j.at("patience");
  t.seed = j.at("seed");
  t.alpha = j.at("alpha");
  t.grad_clip = j.at("grad_clip");
  return t;
}

json metrics_json(const lgnn::MetricsReport& report) {
  json j;
  for (const auto& [name, value] : report.entries()) j[name] = value;
  return j;
}

void write_epoch_log(const lgnn::TrainResult& result, const fs::path& path) {
  auto os = open_out(path);
  os << "epoch,train_loss,val_loss,val_metric\n";
  for (const auto& e : result.log)
    os << e.epoch << ',' << lgnn::io::fmt_double(e.train_loss) << ','
       << lgnn::io::fmt_double(e.val_loss) << ','
       << lgnn::io::fmt_double(e.val_metric) << '\n';
}

json hash_inputs(const fs::path& data_dir, const fs::path& graph_file) {
  json j;
  for (const auto& entry : fs::directory_iterator(data_dir))
    if (entry.is_regular_file())
      j[entry.path().filename().string()] =
          lgnn::io::file_hash(entry.path());
  if (!graph_file.empty())
    j[graph_file.filename().string()] = lgnn::io::file_hash(graph_file);
  return j;
}

json hash_outputs(const fs::path& run_dir,
                  const std::vector<std::string>& names) {
  json j;
  for (const auto& name : names) j[name] = lgnn::io::file_hash(run_dir / name);
  return j;
}

int run_train(const fs::path& data_dir, const fs::path& graph_file,
              const fs::path& run_dir, lgnn::ModelConfig mcfg,
              lgnn::TrainConfig tcfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const lgnn::Dataset ds = lgnn::load_dataset(data_dir);
  mcfg.in_channels = ds.channels;
  mcfg.static_width =
      mcfg.diag_in_static ? ds.static_width : ds.diag_offset;
  mcfg.validate();
  tcfg.validate();

  lgnn::PatientGraph graph;
  const lgnn::PatientGraph* graph_ptr = nullptr;
  if (mcfg.gnn != lgnn::GnnKind::None && !mcfg.dynamic_graph) {
    if (graph_file.empty())
      throw lgnn::ConfigError("--graph is required for a fixed-graph gnn");
    graph = lgnn::load_graph(graph_file);
    if (graph.n != ds.n)
      throw lgnn::DataError("graph has " + std::to_string(graph.n) +
                            " nodes but dataset has " + std::to_string(ds.n));
    graph_ptr = &graph;
  }

  lgnn::LstmGnnModel model(mcfg, tcfg.seed);
  const lgnn::TrainResult result = lgnn::train(model, ds, graph_ptr, tcfg);
  const lgnn::EvalResult test =
      lgnn::evaluate_inductive(model, ds, graph_ptr, ds.test_rows, tcfg);
  const auto t1 = std::chrono::steady_clock::now();

  fs::create_directories(run_dir);
  lgnn::save_checkpoint(model.params(), run_dir / "model.ckpt");
  write_epoch_log(result, run_dir / "epochs.csv");
  {
    auto os = open_out(run_dir / "metrics.json");
    os << metrics_json(test.report).dump(2) << '\n';
  }
  json config;
  config["label"] = model_label(mcfg);
  config["model"] = model_config_json(mcfg);
  config["train"] = train_config_json(tcfg);
  config["data"] = data_dir.string();
  config["graph"] = graph_file.string();
  {
    auto os = open_out(run_dir / "config.json");
    os << config.dump(2) << '\n';
  }
  json manifest;
  manifest["config"] = config;
  manifest["seed"] = tcfg.seed;
  manifest["inputs"] = hash_inputs(data_dir, graph_file);
  manifest["epochs_run"] = result.epochs_run;
  manifest["best_epoch"] = result.best_epoch;
  manifest["best_val_loss"] = result.best_val_loss;
  manifest["elapsed_seconds"] =
      std::chrono::duration<double>(t1 - t0).count();
  manifest["outputs"] = hash_outputs(
      run_dir, {"model.ckpt", "epochs.csv", "metrics.json", "config.json"});
  {
    auto os = open_out(run_dir / "manifest.json");
    os << manifest.dump(2) << '\n';
  }

  std::cout << config["label"].get<std::string>() << " seed " << tcfg.seed
            << ": " << result.epochs_run << " epochs, best epoch "
            << result.best_epoch << "\n";
  for (const auto& [name, value] : test.report.entries())
    std::cout << "  test " << name << " " << lgnn::io::fmt_double(value)
              << "\n";
  return 0;
}

// ---------------------------------------------------------------- evaluate

int run_evaluate(const fs::path& data_dir, const fs::path& graph_file,
                 const fs::path& run_dir, const std::string& split,
                 const fs::path& out_file) {
  const lgnn::Dataset ds = lgnn::load_dataset(data_dir);
  const json config = read_json(run_dir / "config.json");
  const lgnn::ModelConfig mcfg = model_config_from_json(config.at("model"));
  const lgnn::TrainConfig tcfg = train_config_from_json(config.at("train"));

  lgnn::PatientGraph graph;
  const lgnn::PatientGraph* graph_ptr = nullptr;
  if (mcfg.gnn != lgnn::GnnKind::None && !mcfg.dynamic_graph) {
    graph = lgnn::load_graph(graph_file);
    graph_ptr = &graph;
  }

  lgnn::LstmGnnModel model(mcfg, tcfg.seed);
  model.load_params(lgnn::load_checkpoint(run_dir / "model.ckpt"));

  const std::vector<int64_t>* rows = &ds.test_rows;
  if (split == "val")
    rows = &ds.val_rows;
  else if (split == "train")
    rows = &ds.train_rows;
  else if (split != "test")
    throw lgnn::ConfigError("unknown split '" + split + "'");

  const lgnn::EvalResult res =
      lgnn::evaluate_inductive(model, ds, graph_ptr, *rows, tcfg);
  const json j = metrics_json(res.report);
  if (!out_file.empty()) {
    auto os = open_out(out_file);
    os << j.dump(2) << '\n';
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

// ----------------------------------------------------------------- compare

bool higher_is_better(const std::string& metric) {
  return metric == "auroc" || metric == "auprc" || metric == "r2" ||
         metric == "kappa";
}

int run_compare(const std::vector<fs::path>& run_dirs,
                std::string baseline_label, const fs::path& out_file) {
  // group run metric rows by model label
  std::map<std::string, std::vector<std::map<std::string, double>>> groups;
  std::vector<std::string> order;
  for (const auto& dir : run_dirs) {
    const json config = read_json(dir / "config.json");
    const json metrics = read_json(dir / "metrics.json");
    const auto label = config.at("label").get<std::string>();
    if (!groups.count(label)) order.push_back(label);
    std::map<std::string, double> row;
    for (const auto& [name, value] : metrics.items())
      row[name] = value.get<double>();
    groups[label].push_back(std::move(row));
  }
  if (groups.empty()) throw lgnn::ConfigError("no runs given");
  if (baseline_label.empty()) baseline_label = order.front();
  if (!groups.count(baseline_label))
    throw lgnn::ConfigError("baseline label '" + baseline_label +
                            "' not among the runs");

  std::vector<std::string> metric_names;
  for (const auto& [name, value] : groups.begin()->second.front())
    metric_names.push_back(name);

  const auto column = [&](const std::string& label,
                          const std::string& metric) {
    std::vector<double> values;
    for (const auto& row : groups.at(label)) values.push_back(row.at(metric));
    return values;
  };

  std::ostringstream table;
  table << "model";
  for (const auto& m : metric_names) table << '\t' << m;
  table << "\truns\n";
  for (const auto& label : order) {
    table << label;
    for (const auto& metric : metric_names) {
      const auto values = column(label, metric);
      char buf[80];
      if (values.size() < 2) {
        std::snprintf(buf, sizeof(buf), "%.3f", values.front());
      } else {
        std::vector<std::vector<std::pair<std::string, double>>> rows;
        for (double v : values) rows.push_back({{metric, v}});
        const auto agg = lgnn::aggregate_runs(rows);
        const auto [mean, ci] = agg.metrics.at(metric);
        std::snprintf(buf, sizeof(buf), "%.3f±%.3f", mean, ci);
      }
      table << '\t' << buf;
      if (label != baseline_label && values.size() > 1 &&
          groups.at(baseline_label).size() > 1) {
        const auto base = column(baseline_label, metric);
        const double p = lgnn::t_test_p(values, base);
        if (p < 0.05) {
          const auto avg = [](const std::vector<double>& v) {
            return std::accumulate(v.begin(), v.end(), 0.0) /
                   static_cast<double>(v.size());
          };
          const bool better = higher_is_better(metric)
                                  ? avg(values) > avg(base)
                                  : avg(values) < avg(base);
          table << (better ? "‡" : "†");
        }
      }
    }
    table << '\t' << groups.at(label).size() << '\n';
  }

  std::cout << table.str();
  if (!out_file.empty()) {
    auto os = open_out(out_file);
    os << table.str();
  }
  return 0;
}

// -------------------------------------------------------- export-attention

int run_export_attention(const fs::path& data_dir, const fs::path& graph_file,
                         const fs::path& run_dir, const fs::path& out_file) {
  const lgnn::Dataset ds = lgnn::load_dataset(data_dir);
  const json config = read_json(run_dir / "config.json");
  const lgnn::ModelConfig mcfg = model_config_from_json(config.at("model"));
  const lgnn::TrainConfig tcfg = train_config_from_json(config.at("train"));
  if (mcfg.gnn != lgnn::GnnKind::Gat)
    throw lgnn::CapabilityError("attention export requires a gat model");

  const lgnn::PatientGraph graph = lgnn::load_graph(graph_file);
  lgnn::LstmGnnModel model(mcfg, tcfg.seed);
  model.load_params(lgnn::load_checkpoint(run_dir / "model.ckpt"));

  // full neighbor lists over the whole cohort, dropout off
  std::vector<uint8_t> pool(static_cast<size_t>(ds.n), 1);
  std::vector<int64_t> all_rows(static_cast<size_t>(ds.n));
  for (int64_t i = 0; i < ds.n; ++i) all_rows[static_cast<size_t>(i)] = i;

  auto os = open_out(out_file);
  os << "node,neighbor,layer,head,weight\n";

  lgnn::NoGradGuard no_grad;
  std::mt19937_64 rng(tcfg.seed);
  const int64_t chunk = tcfg.batch_size;
  for (int64_t off = 0; off < ds.n; off += chunk) {
    const auto len = std::min(chunk, ds.n - off);
    const lgnn::ModelBatch batch = lgnn::make_batch(
        ds, &graph,
        std::span<const int64_t>(all_rows).subspan(
            static_cast<size_t>(off), static_cast<size_t>(len)),
        mcfg, -1, pool, rng);
    lgnn::AttentionCapture capture;
    (void)model.forward(batch, false, nullptr, &capture);
    const auto emit = [&](int layer,
                          const std::vector<std::vector<double>>& heads) {
      for (size_t h = 0; h < heads.size(); ++h)
        for (size_t e = 0; e < capture.src.size(); ++e) {
          const int64_t src_row = batch.node_ids[static_cast<size_t>(
              capture.src[e])];
          const int64_t dst_row = batch.node_ids[static_cast<size_t>(
              capture.dst[e])];
          // only target-node attention rows are meaningful
          if (capture.src[e] >= batch.n_targets) continue;
          os << ds.ids[static_cast<size_t>(src_row)] << ','
             << ds.ids[static_cast<size_t>(dst_row)] << ',' << layer << ','
             << h << ',' << lgnn::io::fmt_double(heads[h][e]) << '\n';
        }
    };
    emit(0, capture.hidden);
    emit(1, capture.output);
  }
  std::cout << "attention written to " << out_file.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LSTM-GNN patient-outcome pipeline"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "emit a synthetic cohort");
  lgnn::SynthConfig scfg;
  std::string gen_out;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--n", scfg.n_patients, "number of patients");
  gen->add_option("--seed", scfg.seed, "generator seed");
  gen->add_option("--effect-scale", scfg.effect_scale);
  gen->add_option("--severity-sd", scfg.severity_sd);
  gen->add_option("--bias-sd", scfg.patient_bias_sd);
  gen->add_option("--los-noise-sd", scfg.los_noise_sd);
  gen->add_option("--prevalence-decay", scfg.prevalence_decay);
  gen->add_option("--prevalence-min", scfg.prevalence_min);
  gen->add_flag("--planted", scfg.planted_pairs,
                "plant rare diagnosis pairs for attention checks");
  gen->add_option("--pairs", scfg.n_planted_pairs);
  gen->add_option("--planted-effect", scfg.planted_effect);

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "ingest and featurize");
  std::string pre_in, pre_out;
  lgnn::PreprocessConfig pcfg;
  pre->add_option("--in", pre_in, "raw cohort directory")->required();
  pre->add_option("--out", pre_out, "dataset directory")->required();
  pre->add_option("--seed", pcfg.split_seed, "split seed");
  pre->add_option("--threshold", pcfg.diag_threshold,
                  "diagnosis prevalence threshold");
  pre->add_option("--cutoff-hour", pcfg.diag_cutoff_hour);

  // build-graph
  auto* bg = app.add_subcommand("build-graph", "diagnosis k-NN graph");
  std::string bg_data, bg_out;
  lgnn::SimilarityParams gparams;
  bg->add_option("--data", bg_data, "dataset directory")->required();
  bg->add_option("--out", bg_out, "graph file")->required();
  bg->add_option("--k", gparams.k);
  bg->add_option("--a", gparams.a);
  bg->add_option("--c", gparams.c);
  bg->add_flag("--symmetrize", gparams.symmetrize);

  // train
  auto* tr = app.add_subcommand("train", "train one model");
  std::string tr_data, tr_graph, tr_out, tr_gnn = "none", tr_task = "los";
  lgnn::ModelConfig mcfg;
  lgnn::TrainConfig tcfg;
  bool no_diag_static = false;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--graph", tr_graph, "graph file");
  tr->add_option("--out", tr_out, "run directory")->required();
  tr->add_option("--gnn", tr_gnn, "gcn|gat|sage|mpnn|none");
  tr->add_option("--task", tr_task, "ihm|los");
  tr->add_flag("--no-diag-static", no_diag_static,
               "exclude diagnoses from the static input (the * models)");
  tr->add_flag("--dynamic", mcfg.dynamic_graph,
               "per-batch k-NN over temporal embeddings");
  tr->add_option("--seed", tcfg.seed);
  tr->add_option("--epochs", tcfg.max_epochs);
  tr->add_option("--batch-size", tcfg.batch_size);
  tr->add_option("--lr", tcfg.lr);
  tr->add_option("--alpha", tcfg.alpha);
  tr->add_option("--patience", tcfg.patience);
  tr->add_option("--sample-size", tcfg.sample_size);
  tr->add_option("--dropout", mcfg.dropout);
  tr->add_option("--lstm-hidden", mcfg.lstm_hidden);
  tr->add_option("--gnn-hidden", mcfg.gnn_hidden);
  tr->add_option("--gnn-out", mcfg.gnn_out);
  tr->add_option("--gat-heads", mcfg.gat_heads);
  tr->add_option("--dynamic-k", mcfg.dynamic_k);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "score a trained run");
  std::string ev_data, ev_graph, ev_run, ev_split = "test", ev_out;
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--graph", ev_graph);
  ev->add_option("--run", ev_run)->required();
  ev->add_option("--split", ev_split, "train|val|test");
  ev->add_option("--out", ev_out, "metrics output file");

  // compare
  auto* cmp = app.add_subcommand("compare", "aggregate runs into a table");
  std::vector<std::string> cmp_runs;
  std::string cmp_baseline, cmp_out;
  cmp->add_option("--runs", cmp_runs, "run directories")
      ->required()
      ->expected(-1);
  cmp->add_option("--baseline", cmp_baseline,
                  "label of the reference model (default: first run)");
  cmp->add_option("--out", cmp_out, "table output file");

  // export-attention
  auto* ea = app.add_subcommand("export-attention", "dump GAT edge weights");
  std::string ea_data, ea_graph, ea_run, ea_out;
  ea->add_option("--data", ea_data)->required();
  ea->add_option("--graph", ea_graph)->required();
  ea->add_option("--run", ea_run)->required();
  ea->add_option("--out", ea_out)->required();

  try {
    app.parse(argc, argv);

    if (*gen) return run_generate(scfg, gen_out);
    if (*pre) {
      auto records = lgnn::load_records(pre_in);
      const auto ds = lgnn::preprocess(std::move(records), pcfg);
      lgnn::save_dataset(ds, pre_out);
      std::cout << "dataset: " << ds.n << " patients, " << ds.channels
                << " channels, " << ds.vocab.size() << " diagnosis columns\n";
      return 0;
    }
    if (*bg) {
      const auto ds = lgnn::load_dataset(bg_data);
      const auto graph = lgnn::build_knn_graph(ds.diag, gparams);
      lgnn::save_graph(graph, bg_out);
      const auto stats = lgnn::graph_stats(graph);
      std::cout << "graph: " << graph.n << " nodes, " << graph.edge_count()
                << " edges, " << stats.components << " components, score mean "
                << stats.score_mean << "\n";
      return 0;
    }
    if (*tr) {
      mcfg.gnn = lgnn::parse_gnn_kind(tr_gnn);
      mcfg.task = lgnn::parse_task(tr_task);
      mcfg.diag_in_static = !no_diag_static;
      mcfg.alpha = tcfg.alpha;
      return run_train(tr_data, tr_graph, tr_out, mcfg, tcfg);
    }
    if (*ev) return run_evaluate(ev_data, ev_graph, ev_run, ev_split, ev_out);
    if (*cmp) {
      std::vector<fs::path> dirs(cmp_runs.begin(), cmp_runs.end());
      return run_compare(dirs, cmp_baseline, cmp_out);
    }
    if (*ea) return run_export_attention(ea_data, ea_graph, ea_run, ea_out);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const lgnn::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lgnn::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const lgnn::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const lgnn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
