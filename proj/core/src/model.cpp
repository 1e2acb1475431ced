#include "lgnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lgnn/graph.hpp"

namespace lgnn {

std::string gnn_kind_name(GnnKind k) {
  switch (k) {
    case GnnKind::None: return "none";
    case GnnKind::Gcn: return "gcn";
    case GnnKind::Gat: return "gat";
    case GnnKind::Sage: return "sage";
    case GnnKind::Mpnn: return "mpnn";
  }
  throw ContractError("unknown gnn kind");
}

GnnKind parse_gnn_kind(const std::string& s) {
  if (s == "none") return GnnKind::None;
  if (s == "gcn") return GnnKind::Gcn;
  if (s == "gat") return GnnKind::Gat;
  if (s == "sage") return GnnKind::Sage;
  if (s == "mpnn") return GnnKind::Mpnn;
  throw ConfigError("unknown gnn kind '" + s +
                    "' (expected gcn|gat|sage|mpnn|none)");
}

void ModelConfig::validate() const {
  if (lstm_hidden < 1 || lstm_layers < 1 || gnn_hidden < 1 || gnn_out < 1 ||
      static_hidden < 1 || gat_heads < 1 || gat_out_heads < 1 ||
      mpnn_steps < 1 || dynamic_k < 1)
    throw ConfigError("model dimensions must be positive");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("dropout must be in [0,1)");
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (in_channels < 1) throw ConfigError("in_channels not set");
  if (static_width < 1) throw ConfigError("static_width not set");
}

int64_t ModelConfig::gnn_output_width() const {
  switch (gnn) {
    case GnnKind::None: return 0;
    case GnnKind::Gcn: return gnn_out;
    case GnnKind::Gat: return gnn_out;  // output heads are averaged
    case GnnKind::Sage: return 2 * gnn_out;  // self || neighbor mean
    case GnnKind::Mpnn: return gnn_out;
  }
  throw ContractError("unknown gnn kind");
}

int64_t ModelConfig::head_input_width() const {
  return temporal_width() + gnn_output_width() + static_hidden;
}

namespace {

// Uniform fan-in initialization, one stream for the whole model so the
// parameter set is a pure function of (config, seed).
class Initializer {
 public:
  explicit Initializer(uint64_t seed) : rng_(seed) {}

  Tensor matrix(ParamMap& params, const std::string& name, int64_t rows,
                int64_t cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> v(static_cast<size_t>(rows * cols));
    for (auto& x : v) x = u(rng_);
    Tensor t = Tensor::from({rows, cols}, std::move(v), true);
    params.emplace(name, t);
    return t;
  }

  Tensor bias(ParamMap& params, const std::string& name, int64_t n,
              double value = 0.0) {
    Tensor t = Tensor::full({n}, value, true);
    params.emplace(name, t);
    return t;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

LstmGnnModel::LstmGnnModel(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Initializer init(seed);
  const int64_t h = cfg_.lstm_hidden;

  for (int64_t layer = 0; layer < cfg_.lstm_layers; ++layer) {
    const int64_t in = layer == 0 ? cfg_.in_channels : 2 * h;
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string base =
          "lstm." + std::to_string(layer) + "." + dir + ".";
      init.matrix(params_, base + "w_x", in, 4 * h);
      init.matrix(params_, base + "w_h", h, 4 * h);
      // forget-gate bias starts at 1 (gate order: i, f, g, o)
      Tensor b = init.bias(params_, base + "b", 4 * h);
      for (int64_t j = h; j < 2 * h; ++j) b.data()[static_cast<size_t>(j)] = 1.0;
    }
  }

  init.matrix(params_, "static.w", cfg_.static_width, cfg_.static_hidden);
  init.bias(params_, "static.b", cfg_.static_hidden);

  const int64_t tw = cfg_.temporal_width();
  switch (cfg_.gnn) {
    case GnnKind::None:
      break;
    case GnnKind::Gcn:
      init.matrix(params_, "gcn.w", tw, cfg_.gnn_out);
      init.bias(params_, "gcn.b", cfg_.gnn_out);
      break;
    case GnnKind::Sage:
      init.matrix(params_, "sage.w_self", tw, cfg_.gnn_out);
      init.matrix(params_, "sage.w_nb", tw, cfg_.gnn_out);
      init.bias(params_, "sage.b_self", cfg_.gnn_out);
      init.bias(params_, "sage.b_nb", cfg_.gnn_out);
      break;
    case GnnKind::Gat: {
      for (int64_t head = 0; head < cfg_.gat_heads; ++head) {
        const std::string base = "gat.h." + std::to_string(head) + ".";
        init.matrix(params_, base + "w", tw, cfg_.gnn_hidden);
        init.matrix(params_, base + "a_src", cfg_.gnn_hidden, 1);
        init.matrix(params_, base + "a_dst", cfg_.gnn_hidden, 1);
      }
      const int64_t mid = cfg_.gat_heads * cfg_.gnn_hidden;
      for (int64_t head = 0; head < cfg_.gat_out_heads; ++head) {
        const std::string base = "gat.o." + std::to_string(head) + ".";
        init.matrix(params_, base + "w", mid, cfg_.gnn_out);
        init.matrix(params_, base + "a_src", cfg_.gnn_out, 1);
        init.matrix(params_, base + "a_dst", cfg_.gnn_out, 1);
      }
      break;
    }
    case GnnKind::Mpnn: {
      init.matrix(params_, "mpnn.w_embed", tw, cfg_.gnn_hidden);
      init.bias(params_, "mpnn.b_embed", cfg_.gnn_hidden);
      // message MLP on concat(neighbor state, edge score)
      init.matrix(params_, "mpnn.msg.w1", cfg_.gnn_hidden + 1, cfg_.gnn_hidden);
      init.bias(params_, "mpnn.msg.b1", cfg_.gnn_hidden);
      init.matrix(params_, "mpnn.msg.w2", cfg_.gnn_hidden, cfg_.gnn_hidden);
      init.bias(params_, "mpnn.msg.b2", cfg_.gnn_hidden);
      // gated update on concat(state, aggregated message)
      // update function on concat(state, aggregated messages)
      init.matrix(params_, "mpnn.upd.w", 2 * cfg_.gnn_hidden, cfg_.gnn_hidden);
      init.bias(params_, "mpnn.upd.b", cfg_.gnn_hidden);
      init.matrix(params_, "mpnn.w_out", cfg_.gnn_hidden, cfg_.gnn_out);
      init.bias(params_, "mpnn.b_out", cfg_.gnn_out);
      break;
    }
  }

  init.matrix(params_, "head.w", cfg_.head_input_width(), 1);
  init.bias(params_, "head.b", 1);
  init.matrix(params_, "head_lstm.w", tw, 1);
  init.bias(params_, "head_lstm.b", 1);
}

Tensor LstmGnnModel::p(const std::string& name) const {
  const auto it = params_.find(name);
  if (it == params_.end())
    throw ContractError("missing model parameter '" + name + "'");
  return it->second;
}

void LstmGnnModel::load_params(const ParamMap& params) {
  for (auto& [name, t] : params_) {
    const auto it = params.find(name);
    if (it == params.end())
      throw DataError("checkpoint is missing parameter '" + name + "'");
    if (it->second.shape() != t.shape())
      throw DataError("checkpoint parameter '" + name + "' has shape " +
                      shape_str(it->second.shape()) + ", expected " +
                      shape_str(t.shape()));
    std::copy(it->second.data().begin(), it->second.data().end(),
              t.data().begin());
    t.zero_grad();
  }
}

ParamMap LstmGnnModel::clone_params() const {
  ParamMap out;
  for (const auto& [name, t] : params_)
    out.emplace(name, Tensor::from(t.shape(),
                                   {t.data().begin(), t.data().end()}, false));
  return out;
}

Tensor LstmGnnModel::temporal_encode(const std::vector<Tensor>& steps) const {
  if (steps.empty()) throw ContractError("bilstm requires at least one step");
  const int64_t h = cfg_.lstm_hidden;
  const int64_t n = steps[0].dim(0);
  const auto t_len = static_cast<int64_t>(steps.size());

  std::vector<Tensor> layer_in = steps;
  Tensor last_fwd, last_bwd;
  for (int64_t layer = 0; layer < cfg_.lstm_layers; ++layer) {
    std::vector<Tensor> fwd_states, bwd_states;
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string base =
          "lstm." + std::to_string(layer) + "." + std::string(dir) + ".";
      const Tensor w_x = p(base + "w_x");
      const Tensor w_h = p(base + "w_h");
      const Tensor b = p(base + "b");
      Tensor hs = Tensor::zeros({n, h});
      Tensor cs = Tensor::zeros({n, h});
      std::vector<Tensor>& states =
          std::string(dir) == "fwd" ? fwd_states : bwd_states;
      states.resize(static_cast<size_t>(t_len));
      for (int64_t step = 0; step < t_len; ++step) {
        const int64_t idx =
            std::string(dir) == "fwd" ? step : t_len - 1 - step;
        const Tensor& x = layer_in[static_cast<size_t>(idx)];
        Tensor z = add_rowvec(add(matmul(x, w_x), matmul(hs, w_h)), b);
        Tensor gi = sigmoid(slice_cols(z, 0, h));
        Tensor gf = sigmoid(slice_cols(z, h, h));
        Tensor gg = tanh_op(slice_cols(z, 2 * h, h));
        Tensor go = sigmoid(slice_cols(z, 3 * h, h));
        cs = add(mul(gf, cs), mul(gi, gg));
        hs = mul(go, tanh_op(cs));
        states[static_cast<size_t>(idx)] = hs;
      }
      if (std::string(dir) == "fwd")
        last_fwd = hs;
      else
        last_bwd = hs;
    }
    if (layer + 1 < cfg_.lstm_layers) {
      std::vector<Tensor> next(static_cast<size_t>(t_len));
      for (int64_t step = 0; step < t_len; ++step)
        next[static_cast<size_t>(step)] =
            concat({fwd_states[static_cast<size_t>(step)],
                    bwd_states[static_cast<size_t>(step)]},
                   1);
      layer_in = std::move(next);
    }
  }
  // last timestep of the forward pass, first of the backward pass
  return concat({last_fwd, last_bwd}, 1);
}

namespace {

std::vector<int64_t> iota_vec(int64_t n) {
  std::vector<int64_t> v(static_cast<size_t>(n));
  std::iota(v.begin(), v.end(), int64_t{0});
  return v;
}

}  // namespace

Tensor LstmGnnModel::gnn_encode(const Tensor& h_all, const ModelBatch& batch,
                                const std::vector<int64_t>& edge_src,
                                const std::vector<int64_t>& edge_dst,
                                const std::vector<double>& edge_scores,
                                AttentionCapture* attention) const {
  const int64_t nt = batch.n_targets;
  const int64_t ng = h_all.dim(0);

  switch (cfg_.gnn) {
    case GnnKind::None:
      throw ContractError("gnn_encode called with gnn kind none");

    case GnnKind::Gcn: {
      // mean over {self} + sampled neighbors of transformed features
      std::vector<int64_t> src = iota_vec(nt), dst = iota_vec(nt);
      src.insert(src.end(), edge_src.begin(), edge_src.end());
      dst.insert(dst.end(), edge_dst.begin(), edge_dst.end());
      Tensor hw = matmul(h_all, p("gcn.w"));
      Tensor agg = segment_aggregate(gather_rows(hw, dst), src, nt,
                                     SegmentMode::Mean);
      return elu(add_rowvec(agg, p("gcn.b")));
    }

    case GnnKind::Sage: {
      Tensor self_t = add_rowvec(
          matmul(slice_rows(h_all, 0, nt), p("sage.w_self")), p("sage.b_self"));
      Tensor nb;
      if (edge_src.empty()) {
        nb = Tensor::zeros({nt, cfg_.gnn_out});
      } else {
        nb = segment_aggregate(
            gather_rows(add_rowvec(matmul(h_all, p("sage.w_nb")),
                                   p("sage.b_nb")),
                        edge_dst),
            edge_src, nt, SegmentMode::Mean);
      }
      return elu(concat({self_t, nb}, 1));
    }

    case GnnKind::Gat: {
      // attention sets: every gathered node attends over itself plus, for
      // targets, the sampled neighbors
      std::vector<int64_t> src = iota_vec(ng), dst = iota_vec(ng);
      src.insert(src.end(), edge_src.begin(), edge_src.end());
      dst.insert(dst.end(), edge_dst.begin(), edge_dst.end());
      if (attention) {
        attention->src = src;
        attention->dst = dst;
      }
      auto attention_layer = [&](const Tensor& input, const std::string& prefix,
                                 int64_t heads, bool average,
                                 std::vector<std::vector<double>>* capture) {
        std::vector<Tensor> outputs;
        for (int64_t head = 0; head < heads; ++head) {
          const std::string base = prefix + std::to_string(head) + ".";
          Tensor hw = matmul(input, p(base + "w"));
          Tensor src_score = matmul(hw, p(base + "a_src"));
          Tensor dst_score = matmul(hw, p(base + "a_dst"));
          Tensor logits = leaky_relu(
              add(gather_rows(src_score, src), gather_rows(dst_score, dst)));
          Tensor alpha = segment_softmax(logits, src, ng);
          if (capture)
            capture->emplace_back(alpha.data().begin(), alpha.data().end());
          Tensor msg = mul_colvec(gather_rows(hw, dst), alpha);
          outputs.push_back(
              segment_aggregate(msg, src, ng, SegmentMode::Sum));
        }
        if (!average) return concat(std::span<const Tensor>(outputs), 1);
        Tensor acc = outputs[0];
        for (size_t i = 1; i < outputs.size(); ++i) acc = add(acc, outputs[i]);
        return scale(acc, 1.0 / static_cast<double>(outputs.size()));
      };
      Tensor hidden = elu(attention_layer(h_all, "gat.h.", cfg_.gat_heads,
                                          false,
                                          attention ? &attention->hidden
                                                    : nullptr));
      Tensor out = attention_layer(hidden, "gat.o.", cfg_.gat_out_heads, true,
                                   attention ? &attention->output : nullptr);
      return slice_rows(elu(out), 0, nt);
    }

    case GnnKind::Mpnn: {
      if (!edge_src.empty() && edge_scores.size() != edge_src.size())
        throw ConfigError("mpnn requires an edge score per sampled edge");
      Tensor s_all =
          elu(add_rowvec(matmul(h_all, p("mpnn.w_embed")), p("mpnn.b_embed")));
      Tensor state = slice_rows(s_all, 0, nt);
      Tensor scores;
      if (!edge_src.empty()) {
        // standardize the raw similarity scores per batch so the edge
        // feature lives on the same scale as the hidden activations
        const auto ne = static_cast<double>(edge_scores.size());
        double mean = 0.0;
        for (double s : edge_scores) mean += s;
        mean /= ne;
        double var = 0.0;
        for (double s : edge_scores) var += (s - mean) * (s - mean);
        std::vector<double> std_scores;
        std_scores.reserve(edge_scores.size());
        const double denom = std::sqrt(var / ne) + 1e-8;
        for (double s : edge_scores) std_scores.push_back((s - mean) / denom);
        const auto n_edges = static_cast<int64_t>(std_scores.size());
        scores = Tensor::from({n_edges, 1}, std::move(std_scores));
      }
      for (int64_t step = 0; step < cfg_.mpnn_steps; ++step) {
        Tensor aggregated;
        if (edge_src.empty()) {
          aggregated = Tensor::zeros({nt, cfg_.gnn_hidden});
        } else {
          Tensor nb_state = gather_rows(s_all, edge_dst);
          Tensor msg_in = concat({nb_state, scores}, 1);
          Tensor msg = add_rowvec(
              matmul(elu(add_rowvec(matmul(msg_in, p("mpnn.msg.w1")),
                                    p("mpnn.msg.b1"))),
                     p("mpnn.msg.w2")),
              p("mpnn.msg.b2"));
          aggregated = segment_aggregate(msg, edge_src, nt, SegmentMode::Sum);
        }
        Tensor u = concat({state, aggregated}, 1);
        state = elu(add_rowvec(matmul(u, p("mpnn.upd.w")), p("mpnn.upd.b")));
      }
      return elu(add_rowvec(matmul(state, p("mpnn.w_out")), p("mpnn.b_out")));
    }
  }
  throw ContractError("unknown gnn kind");
}

Predictions LstmGnnModel::forward(const ModelBatch& batch, bool training,
                                  std::mt19937_64* dropout_rng,
                                  AttentionCapture* attention) const {
  if (batch.steps.empty())
    throw ContractError("batch has an empty time dimension");
  if (attention && cfg_.gnn != GnnKind::Gat)
    throw CapabilityError("attention export requires a GAT model");
  if (training && cfg_.dropout > 0.0 && dropout_rng == nullptr)
    throw ContractError("training forward pass needs a dropout generator");

  Tensor h_all = temporal_encode(batch.steps);
  Tensor h_t = slice_rows(h_all, 0, batch.n_targets);

  const std::vector<int64_t>* edge_src = &batch.edge_src;
  const std::vector<int64_t>* edge_dst = &batch.edge_dst;
  const std::vector<double>* edge_scores = &batch.edge_scores;
  std::vector<int64_t> dyn_src, dyn_dst;
  std::vector<double> dyn_scores;
  if (cfg_.dynamic_graph && cfg_.gnn != GnnKind::None) {
    const BatchGraph bg = dynamic_knn_from_embeddings(
        h_t.data(), batch.n_targets, h_t.dim(1), cfg_.dynamic_k);
    for (int64_t i = 0; i < bg.n; ++i)
      for (size_t e = 0; e < bg.neighbors[static_cast<size_t>(i)].size(); ++e) {
        dyn_src.push_back(i);
        dyn_dst.push_back(bg.neighbors[static_cast<size_t>(i)][e]);
        dyn_scores.push_back(bg.distances[static_cast<size_t>(i)][e]);
      }
    edge_src = &dyn_src;
    edge_dst = &dyn_dst;
    edge_scores = &dyn_scores;
  }

  auto drop = [&](const Tensor& x) {
    if (!training || cfg_.dropout == 0.0) return x;
    return dropout(x, cfg_.dropout, *dropout_rng, true);
  };

  Tensor h_s = elu(add_rowvec(matmul(batch.statics, p("static.w")),
                              p("static.b")));

  std::vector<Tensor> parts;
  parts.push_back(drop(h_t));
  if (cfg_.gnn != GnnKind::None) {
    Tensor h_n =
        gnn_encode(h_all, batch, *edge_src, *edge_dst, *edge_scores, attention);
    parts.push_back(drop(h_n));
  }
  parts.push_back(drop(h_s));
  Tensor joint = concat(std::span<const Tensor>(parts), 1);

  Tensor raw = add_rowvec(matmul(joint, p("head.w")), p("head.b"));
  Tensor raw_lstm =
      add_rowvec(matmul(drop(h_t), p("head_lstm.w")), p("head_lstm.b"));

  Predictions out;
  if (cfg_.task == Task::Ihm) {
    out.y = sigmoid(raw);
    out.y_lstm = sigmoid(raw_lstm);
  } else {
    out.y = exp_op(raw);
    out.y_lstm = exp_op(raw_lstm);
  }
  return out;
}

}  // namespace lgnn
