#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lgnn/checkpoint.hpp"
#include "lgnn/metrics.hpp"
#include "lgnn/tensor.hpp"

namespace lgnn {

enum class GnnKind { None, Gcn, Gat, Sage, Mpnn };

std::string gnn_kind_name(GnnKind k);
GnnKind parse_gnn_kind(const std::string& s);

struct ModelConfig {
  int64_t lstm_hidden = 24;
  int64_t lstm_layers = 1;
  GnnKind gnn = GnnKind::None;
  int64_t gnn_hidden = 32;
  int64_t gnn_out = 32;
  int64_t gat_heads = 4;
  int64_t gat_out_heads = 2;
  int64_t mpnn_steps = 1;
  int64_t static_hidden = 16;
  double dropout = 0.1;
  double alpha = 1.0;
  Task task = Task::Los;
  bool diag_in_static = true;  // false reproduces the * model family
  bool dynamic_graph = false;  // per-batch k-NN over temporal embeddings
  int64_t dynamic_k = 3;

  // derived from the dataset
  int64_t in_channels = 0;
  int64_t static_width = 0;  // width of the static vector actually fed

  void validate() const;
  int64_t temporal_width() const { return 2 * lstm_hidden; }
  int64_t gnn_output_width() const;
  int64_t head_input_width() const;
};

// One gathered mini-batch: target nodes first, then sampled-neighbor rows.
// Edges point target -> gathered neighbor; statics/labels cover targets only.
struct ModelBatch {
  int64_t n_targets = 0;
  int64_t n_gathered = 0;
  std::vector<int64_t> node_ids;  // gathered order -> dataset row
  std::vector<Tensor> steps;      // T constant tensors [n_gathered x C]
  Tensor statics;                 // [n_targets x static_width]
  std::vector<int64_t> edge_src;  // target index in [0, n_targets)
  std::vector<int64_t> edge_dst;  // gathered index
  std::vector<double> edge_scores;
  std::vector<double> y;          // task labels for targets
};

struct Predictions {
  Tensor y;       // [n_targets x 1], task output range (sigmoid / exp)
  Tensor y_lstm;  // auxiliary head on the temporal embedding alone
};

// Softmax attention coefficients captured during a GAT forward pass.
// Edge lists include the self-loop of every gathered node.
struct AttentionCapture {
  std::vector<int64_t> src, dst;              // gathered indices
  std::vector<std::vector<double>> hidden;    // per head, one value per edge
  std::vector<std::vector<double>> output;    // per output head
};

class LstmGnnModel {
 public:
  LstmGnnModel(ModelConfig cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamMap& params() { return params_; }
  const ParamMap& params() const { return params_; }

  void load_params(const ParamMap& params);
  ParamMap clone_params() const;

  Predictions forward(const ModelBatch& batch, bool training,
                      std::mt19937_64* dropout_rng = nullptr,
                      AttentionCapture* attention = nullptr) const;

  // Temporal embedding h_T for every gathered row: [n_gathered x 2*hidden].
  Tensor temporal_encode(const std::vector<Tensor>& steps) const;

 private:
  Tensor p(const std::string& name) const;
  Tensor gnn_encode(const Tensor& h_all, const ModelBatch& batch,
                    const std::vector<int64_t>& edge_src,
                    const std::vector<int64_t>& edge_dst,
                    const std::vector<double>& edge_scores,
                    AttentionCapture* attention) const;

  ModelConfig cfg_;
  ParamMap params_;
};

}  // namespace lgnn
