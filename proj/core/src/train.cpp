#include "lgnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace lgnn {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (lr < 0.0) throw ConfigError("lr must be >= 0");
  if (sample_size < 0) throw ConfigError("sample_size must be >= 0");
  if (max_epochs < 1) throw ConfigError("max_epochs must be positive");
  if (patience < 1) throw ConfigError("patience must be positive");
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
}

Tensor loss_ihm(const Tensor& y_pred, std::span<const double> y_true) {
  if (static_cast<size_t>(y_pred.size()) != y_true.size())
    throw ContractError("loss_ihm: prediction/label size mismatch");
  for (int64_t i = 0; i < y_pred.size(); ++i) {
    const double p = y_pred.data()[static_cast<size_t>(i)];
    if (!(p > 0.0 && p < 1.0))
      throw DomainError("loss_ihm: prediction " + std::to_string(p) +
                        " at index " + std::to_string(i) +
                        " outside (0,1)");
  }
  const auto n = static_cast<int64_t>(y_true.size());
  Tensor y = Tensor::from(y_pred.shape(), {y_true.begin(), y_true.end()});
  Tensor one = Tensor::full(y_pred.shape(), 1.0);
  Tensor term_pos = mul(y, log_op(y_pred));
  Tensor term_neg = mul(sub(one, y), log_op(sub(one, y_pred)));
  return scale(sum(add(term_pos, term_neg)), -1.0 / static_cast<double>(n));
}

Tensor loss_los(const Tensor& y_pred, std::span<const double> y_true) {
  if (static_cast<size_t>(y_pred.size()) != y_true.size())
    throw ContractError("loss_los: prediction/label size mismatch");
  for (int64_t i = 0; i < y_pred.size(); ++i)
    if (!(y_pred.data()[static_cast<size_t>(i)] > 0.0))
      throw DomainError("loss_los: nonpositive prediction at index " +
                        std::to_string(i));
  for (size_t i = 0; i < y_true.size(); ++i)
    if (!(y_true[i] > 0.0))
      throw DomainError("loss_los: nonpositive label at index " +
                        std::to_string(i));
  std::vector<double> logy(y_true.size());
  for (size_t i = 0; i < y_true.size(); ++i) logy[i] = std::log1p(y_true[i]);
  Tensor target = Tensor::from(y_pred.shape(), std::move(logy));
  Tensor diff = sub(log1p_op(y_pred), target);
  return mean(mul(diff, diff));
}

Tensor task_loss(Task task, const Tensor& y_pred,
                 std::span<const double> y_true) {
  return task == Task::Ihm ? loss_ihm(y_pred, y_true)
                           : loss_los(y_pred, y_true);
}

Tensor joint_loss(Task task, const Tensor& y_pred, const Tensor& y_lstm,
                  std::span<const double> y_true, double alpha) {
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  return add(task_loss(task, y_pred, y_true),
             scale(task_loss(task, y_lstm, y_true), alpha));
}

AdamOptimizer::AdamOptimizer(ParamMap& params, const TrainConfig& cfg)
    : params_(params), cfg_(cfg) {
  for (const auto& [name, t] : params_) {
    m_[name].assign(static_cast<size_t>(t.size()), 0.0);
    v_[name].assign(static_cast<size_t>(t.size()), 0.0);
  }
}

void AdamOptimizer::step() {
  // global-norm clipping over all parameter gradients
  if (cfg_.grad_clip > 0.0) {
    double norm2 = 0.0;
    for (const auto& [name, t] : params_)
      for (double g : t.grad()) norm2 += g * g;
    const double norm = std::sqrt(norm2);
    if (norm > cfg_.grad_clip) {
      const double factor = cfg_.grad_clip / norm;
      for (auto& [name, t] : params_) {
        if (!t.has_grad()) continue;
        auto& g = t.impl()->grad_buffer();
        for (double& x : g) x *= factor;
      }
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, t] : params_) {
    auto& m = m_[name];
    auto& v = v_[name];
    auto values = t.data();
    const auto grad = t.grad();
    for (size_t i = 0; i < values.size(); ++i) {
      const double g =
          (grad.empty() ? 0.0 : grad[i]) + cfg_.weight_decay * values[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
    t.zero_grad();
  }
}

std::vector<uint8_t> pool_mask(int64_t n, std::span<const int64_t> rows) {
  std::vector<uint8_t> mask(static_cast<size_t>(n), 0);
  for (int64_t r : rows) mask[static_cast<size_t>(r)] = 1;
  return mask;
}

ModelBatch make_batch(const Dataset& ds, const PatientGraph* graph,
                      std::span<const int64_t> targets, const ModelConfig& cfg,
                      int64_t sample_size, std::span<const uint8_t> pool,
                      std::mt19937_64& rng,
                      std::vector<int64_t>* sampled_ids) {
  ModelBatch batch;
  batch.n_targets = static_cast<int64_t>(targets.size());
  std::vector<int64_t> gathered(targets.begin(), targets.end());
  std::map<int64_t, int64_t> index_of;
  for (size_t i = 0; i < gathered.size(); ++i)
    index_of[gathered[i]] = static_cast<int64_t>(i);
  if (sampled_ids)
    sampled_ids->insert(sampled_ids->end(), targets.begin(), targets.end());

  const bool wants_neighbors =
      cfg.gnn != GnnKind::None && !cfg.dynamic_graph && graph != nullptr;
  if (wants_neighbors) {
    std::vector<int64_t> candidates;
    std::vector<double> candidate_scores;
    for (size_t ti = 0; ti < targets.size(); ++ti) {
      const auto node = static_cast<size_t>(targets[ti]);
      candidates.clear();
      candidate_scores.clear();
      for (size_t e = 0; e < graph->neighbors[node].size(); ++e) {
        const int64_t nb = graph->neighbors[node][e];
        if (pool[static_cast<size_t>(nb)]) {
          candidates.push_back(nb);
          candidate_scores.push_back(graph->scores[node][e]);
        }
      }
      if (candidates.empty()) continue;  // self-only aggregation
      const auto pick = [&](size_t ci) {
        const int64_t nb = candidates[ci];
        auto [it, inserted] =
            index_of.try_emplace(nb, static_cast<int64_t>(gathered.size()));
        if (inserted) gathered.push_back(nb);
        batch.edge_src.push_back(static_cast<int64_t>(ti));
        batch.edge_dst.push_back(it->second);
        batch.edge_scores.push_back(candidate_scores[ci]);
        if (sampled_ids) sampled_ids->push_back(nb);
      };
      if (sample_size < 0) {
        for (size_t ci = 0; ci < candidates.size(); ++ci) pick(ci);
      } else {
        for (int64_t s = 0; s < sample_size; ++s)
          pick(static_cast<size_t>(rng() % candidates.size()));
      }
    }
  }
  batch.n_gathered = static_cast<int64_t>(gathered.size());
  batch.node_ids = gathered;

  // time-step tensors for the gathered rows
  const int64_t c = ds.channels;
  batch.steps.reserve(static_cast<size_t>(ds.t_steps));
  for (int64_t h = 0; h < ds.t_steps; ++h) {
    std::vector<double> step(gathered.size() * static_cast<size_t>(c));
    for (size_t g = 0; g < gathered.size(); ++g)
      std::copy_n(ds.series.data() + (gathered[g] * ds.t_steps + h) * c, c,
                  step.data() + static_cast<int64_t>(g) * c);
    batch.steps.push_back(
        Tensor::from({batch.n_gathered, c}, std::move(step)));
  }

  // statics for targets, optionally without the diagnosis block
  const int64_t width = cfg.diag_in_static ? ds.static_width : ds.diag_offset;
  {
    std::vector<double> st(targets.size() * static_cast<size_t>(width));
    for (size_t ti = 0; ti < targets.size(); ++ti)
      std::copy_n(ds.statics.data() + targets[ti] * ds.static_width, width,
                  st.data() + static_cast<int64_t>(ti) * width);
    batch.statics =
        Tensor::from({batch.n_targets, width}, std::move(st));
  }

  const auto& labels = cfg.task == Task::Ihm ? ds.ihm : ds.los;
  for (int64_t t : targets) batch.y.push_back(labels[static_cast<size_t>(t)]);
  return batch;
}

namespace {

double param_norm(const ParamMap& params) {
  double s = 0.0;
  for (const auto& [name, t] : params)
    for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

struct EvalPass {
  double loss = 0.0;
  std::vector<double> y_pred, y_true;
};

EvalPass run_eval(const LstmGnnModel& model, const Dataset& ds,
                  const PatientGraph* graph, std::span<const int64_t> rows,
                  std::span<const uint8_t> pool, const TrainConfig& cfg,
                  uint64_t sample_seed) {
  NoGradGuard no_grad;
  std::mt19937_64 rng(sample_seed);
  EvalPass out;
  double loss_sum = 0.0;
  int64_t batches = 0;
  for (size_t off = 0; off < rows.size();
       off += static_cast<size_t>(cfg.batch_size)) {
    const auto len =
        std::min(static_cast<size_t>(cfg.batch_size), rows.size() - off);
    ModelBatch batch = make_batch(ds, graph, rows.subspan(off, len),
                                  model.config(), cfg.sample_size, pool, rng);
    const Predictions pred = model.forward(batch, false);
    Tensor loss = task_loss(model.config().task, pred.y, batch.y);
    loss_sum += loss.item();
    ++batches;
    out.y_pred.insert(out.y_pred.end(), pred.y.data().begin(),
                      pred.y.data().end());
    out.y_true.insert(out.y_true.end(), batch.y.begin(), batch.y.end());
  }
  out.loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
  return out;
}

double eval_metric(Task task, const EvalPass& ev) {
  try {
    if (task == Task::Ihm) {
      std::vector<int> labels(ev.y_true.size());
      for (size_t i = 0; i < labels.size(); ++i) labels[i] = ev.y_true[i] > 0.5;
      return auroc(ev.y_pred, labels);
    }
    return regression_metrics(ev.y_pred, ev.y_true).msle;
  } catch (const MetricError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

TrainResult train(LstmGnnModel& model, const Dataset& ds,
                  const PatientGraph* graph, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.train_rows.empty()) throw ContractError("empty training split");

  const auto train_pool = pool_mask(ds.n, ds.train_rows);
  // validation sampling may reach train+val, never test
  std::vector<int64_t> train_val = ds.train_rows;
  train_val.insert(train_val.end(), ds.val_rows.begin(), ds.val_rows.end());
  const auto val_pool = pool_mask(ds.n, train_val);

  AdamOptimizer opt(model.params(), cfg);
  TrainResult result;
  ParamMap best;
  double best_val = std::numeric_limits<double>::infinity();
  int64_t best_epoch = -1, since_best = 0;

  std::vector<int64_t> order = ds.train_rows;
  for (int64_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ull +
                        static_cast<uint64_t>(epoch) + 1);
    std::mt19937_64 dropout_rng(rng());
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng() % i]);

    double loss_sum = 0.0;
    int64_t batches = 0;
    for (size_t off = 0; off < order.size();
         off += static_cast<size_t>(cfg.batch_size)) {
      const auto len =
          std::min(static_cast<size_t>(cfg.batch_size), order.size() - off);
      Tape::active().clear();
      ModelBatch batch = make_batch(
          ds, graph, std::span<const int64_t>(order).subspan(off, len),
          model.config(), cfg.sample_size, train_pool, rng,
          &result.train_sampled_ids);
      const Predictions pred = model.forward(batch, true, &dropout_rng);
      Tensor loss =
          joint_loss(model.config().task, pred.y, pred.y_lstm, batch.y,
                     cfg.alpha);
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        std::ostringstream os;
        os << "non-finite training loss at epoch " << epoch << ", batch "
           << batches << " (parameter norm " << param_norm(model.params())
           << ")";
        throw NumericError(os.str());
      }
      loss_sum += loss_value;
      ++batches;
      backward(loss);
      opt.step();
    }

    const EvalPass val = run_eval(model, ds, graph, ds.val_rows, val_pool, cfg,
                                  cfg.seed * 0x51ed2701ull + 17);
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(std::max<int64_t>(batches, 1));
    log.val_loss = val.loss;
    log.val_metric = eval_metric(model.config().task, val);
    result.log.push_back(log);
    ++result.epochs_run;

    if (ds.val_rows.empty() || val.loss < best_val) {
      best_val = val.loss;
      best_epoch = epoch;
      best = model.clone_params();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  if (!best.empty()) model.load_params(best);
  result.best_epoch = best_epoch;
  result.best_val_loss = best_val;
  return result;
}

EvalResult evaluate_inductive(const LstmGnnModel& model, const Dataset& ds,
                              const PatientGraph* graph,
                              std::span<const int64_t> eval_rows,
                              const TrainConfig& cfg) {
  if (eval_rows.empty()) throw ContractError("empty evaluation split");
  std::vector<uint8_t> all_pool(static_cast<size_t>(ds.n), 1);
  const EvalPass ev = run_eval(model, ds, graph, eval_rows, all_pool, cfg,
                               cfg.seed * 0xb5297a4dull + 29);
  EvalResult out;
  out.evaluated_rows.assign(eval_rows.begin(), eval_rows.end());
  out.y_pred = ev.y_pred;
  out.y_true = ev.y_true;
  out.report = compute_report(model.config().task, out.y_pred, out.y_true);
  return out;
}

}  // namespace lgnn
