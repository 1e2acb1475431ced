#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "lgnn/graph.hpp"
#include "lgnn/model.hpp"
#include "lgnn/preprocess.hpp"

namespace lgnn {

struct TrainConfig {
  int64_t batch_size = 64;
  double lr = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
  int64_t sample_size = 3;  // neighbors drawn per node, with replacement
  int64_t max_epochs = 25;
  int64_t patience = 7;
  uint64_t seed = 0;
  double alpha = 1.0;
  double grad_clip = 5.0;

  void validate() const;
};

// Mean binary cross-entropy; predictions must lie strictly inside (0,1).
Tensor loss_ihm(const Tensor& y_pred, std::span<const double> y_true);

// Mean squared logarithmic error on log(1+x); inputs must be positive.
Tensor loss_los(const Tensor& y_pred, std::span<const double> y_true);

Tensor task_loss(Task task, const Tensor& y_pred, std::span<const double> y_true);

// L = L(y) + alpha * L(y_lstm)
Tensor joint_loss(Task task, const Tensor& y_pred, const Tensor& y_lstm,
                  std::span<const double> y_true, double alpha);

class AdamOptimizer {
 public:
  AdamOptimizer(ParamMap& params, const TrainConfig& cfg);

  // Clips the global gradient norm, applies one Adam update with coupled
  // L2 weight decay, then clears the gradients.
  void step();

  int64_t steps_taken() const { return t_; }

 private:
  ParamMap& params_;
  TrainConfig cfg_;
  std::map<std::string, std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

// Fixed-size uniform neighborhood sampling restricted to `pool`. Nodes
// whose pool-restricted neighbor set is empty get zero neighbors.
// When sample_size < 0 the full pool-restricted neighbor list is used.
ModelBatch make_batch(const Dataset& ds, const PatientGraph* graph,
                      std::span<const int64_t> targets, const ModelConfig& cfg,
                      int64_t sample_size, std::span<const uint8_t> pool,
                      std::mt19937_64& rng,
                      std::vector<int64_t>* sampled_ids = nullptr);

std::vector<uint8_t> pool_mask(int64_t n, std::span<const int64_t> rows);

struct EpochLog {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;  // auroc for ihm, msle for los
};

struct TrainResult {
  std::vector<EpochLog> log;
  int64_t epochs_run = 0;
  int64_t best_epoch = 0;
  double best_val_loss = 0.0;
  // instrumentation: every id sampled (targets and neighbors) during
  // training batches, for the inductive-protocol check
  std::vector<int64_t> train_sampled_ids;
};

// Mini-batch training on the train split with validation-loss early
// stopping; the model is left holding the best-validation parameters.
TrainResult train(LstmGnnModel& model, const Dataset& ds,
                  const PatientGraph* graph, const TrainConfig& cfg);

struct EvalResult {
  MetricsReport report;
  std::vector<int64_t> evaluated_rows;
  std::vector<double> y_pred, y_true;
};

// Inductive evaluation: neighbors sampled from the entire dataset, metrics
// computed on the test rows only, dropout off.
EvalResult evaluate_inductive(const LstmGnnModel& model, const Dataset& ds,
                              const PatientGraph* graph,
                              std::span<const int64_t> eval_rows,
                              const TrainConfig& cfg);

}  // namespace lgnn
