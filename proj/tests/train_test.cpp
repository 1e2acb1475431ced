#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "lgnn/graph.hpp"
#include "lgnn/synth.hpp"
#include "lgnn/train.hpp"

using namespace lgnn;

namespace {

Dataset tiny_dataset(int64_t n, uint64_t seed, double signal = 1.0) {
  SynthConfig cfg;
  cfg.n_patients = n;
  cfg.seed = seed;
  cfg.effect_scale = 0.4 * signal;
  PreprocessConfig pcfg;
  pcfg.split_seed = seed + 1;
  return preprocess(generate(cfg).records, pcfg);
}

}  // namespace

TEST_CASE("ihm loss hand cases") {
  const std::vector<double> ones{1.0};
  Tensor nearly = Tensor::from({1, 1}, {1.0 - 1e-12});
  CHECK(loss_ihm(nearly, ones).item() ==
        doctest::Approx(0.0).epsilon(1e-9));

  const std::vector<double> y{0.0, 1.0};
  Tensor half = Tensor::from({2, 1}, {0.5, 0.5});
  CHECK(loss_ihm(half, y).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Tensor quarter = Tensor::from({1, 1}, {0.25});
  CHECK(loss_ihm(quarter, ones).item() ==
        doctest::Approx(-std::log(0.25)).epsilon(1e-12));

  Tensor outside = Tensor::from({1, 1}, {1.5});
  CHECK_THROWS_AS(loss_ihm(outside, ones), DomainError);
}

TEST_CASE("los loss hand cases") {
  const std::vector<double> same{3.0, 7.0};
  Tensor pred = Tensor::from({2, 1}, {3.0, 7.0});
  CHECK(loss_los(pred, same).item() == 0.0);

  const std::vector<double> y{std::exp(2.0) - 1.0};
  Tensor e_minus_one = Tensor::from({1, 1}, {std::exp(1.0) - 1.0});
  CHECK(loss_los(e_minus_one, y).item() ==
        doctest::Approx(1.0).epsilon(1e-12));

  Tensor bad = Tensor::from({1, 1}, {-1.0});
  CHECK_THROWS_AS(loss_los(bad, y), DomainError);
  Tensor fine = Tensor::from({1, 1}, {1.0});
  const std::vector<double> bad_label{0.0};
  CHECK_THROWS_AS(loss_los(fine, bad_label), DomainError);
}

TEST_CASE("msle loss equals the msle metric exactly") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> unif(0.5, 20.0);
  std::vector<double> pred(17), truth(17);
  for (size_t i = 0; i < pred.size(); ++i) {
    pred[i] = unif(rng);
    truth[i] = unif(rng);
  }
  Tensor p = Tensor::from({17, 1}, {pred.begin(), pred.end()});
  CHECK(loss_los(p, truth).item() ==
        regression_metrics(pred, truth).msle);
}

TEST_CASE("joint loss is affine in alpha") {
  const std::vector<double> y{2.0, 5.0};
  Tensor full = Tensor::from({2, 1}, {3.0, 4.0});
  Tensor aux = Tensor::from({2, 1}, {2.5, 6.0});

  const double l_full = task_loss(Task::Los, full, y).item();
  const double l_aux = task_loss(Task::Los, aux, y).item();
  for (double alpha : {0.0, 1.0, 2.5}) {
    CHECK(joint_loss(Task::Los, full, aux, y, alpha).item() ==
          doctest::Approx(l_full + alpha * l_aux).epsilon(1e-12));
  }
  CHECK(joint_loss(Task::Los, full, full, y, 1.0).item() ==
        doctest::Approx(2.0 * l_full).epsilon(1e-12));
  CHECK_THROWS_AS(joint_loss(Task::Los, full, aux, y, -0.5), ConfigError);
}

TEST_CASE("one adam step matches the closed form") {
  ParamMap params;
  params.emplace("w", Tensor::from({1}, {3.0}, true));
  TrainConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  cfg.grad_clip = 0.0;
  AdamOptimizer opt(params, cfg);

  // quadratic loss 0.5 w^2 has gradient w
  Tensor w = params.at("w");
  backward(scale(mul(w, w), 0.5));
  const double g = 3.0;
  opt.step();

  const double m_hat = (0.1 * g) / 0.1;           // beta1 = 0.9, t = 1
  const double v_hat = (0.001 * g * g) / 0.001;   // beta2 = 0.999
  const double expected = 3.0 - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  CHECK(w.data()[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(opt.steps_taken() == 1);
  CHECK(!w.has_grad());  // gradients cleared after the step
}

TEST_CASE("gradient clipping rescales to the configured norm") {
  ParamMap params;
  params.emplace("w", Tensor::from({2}, {0.0, 0.0}, true));
  TrainConfig cfg;
  cfg.lr = 1.0;
  cfg.weight_decay = 0.0;
  cfg.grad_clip = 1.0;
  AdamOptimizer opt(params, cfg);

  Tensor w = params.at("w");
  auto& g = w.impl()->grad_buffer();
  g[0] = 30.0;
  g[1] = 40.0;  // norm 50, rescaled to 1
  opt.step();
  // both coordinates move by lr * m_hat/sqrt(v_hat) which is sign-driven,
  // so check the clip via the internal first moment proxy: re-run with no
  // clip and compare magnitudes
  ParamMap params2;
  params2.emplace("w", Tensor::from({2}, {0.0, 0.0}, true));
  TrainConfig cfg2 = cfg;
  cfg2.grad_clip = 0.0;
  AdamOptimizer opt2(params2, cfg2);
  auto& g2 = params2.at("w").impl()->grad_buffer();
  g2[0] = 0.6;
  g2[1] = 0.8;
  opt2.step();
  CHECK(w.data()[0] == doctest::Approx(params2.at("w").data()[0]).epsilon(1e-12));
  CHECK(w.data()[1] == doctest::Approx(params2.at("w").data()[1]).epsilon(1e-12));
}

TEST_CASE("neighborhood sampling follows the pool and size rules") {
  Dataset ds = tiny_dataset(60, 3);
  SimilarityParams gp;
  const PatientGraph graph = build_knn_graph(ds.diag, gp);
  ModelConfig mcfg;
  mcfg.gnn = GnnKind::Sage;
  mcfg.task = Task::Los;
  mcfg.in_channels = ds.channels;
  mcfg.static_width = ds.static_width;

  std::mt19937_64 rng(5);
  const auto pool = pool_mask(ds.n, ds.train_rows);
  const std::set<int64_t> train_set(ds.train_rows.begin(),
                                    ds.train_rows.end());

  const std::vector<int64_t> targets{ds.train_rows[0], ds.train_rows[1]};
  auto batch = make_batch(ds, &graph, targets, mcfg, 5, pool, rng);
  std::map<int64_t, int64_t> per_target;
  for (size_t e = 0; e < batch.edge_src.size(); ++e) {
    ++per_target[batch.edge_src[e]];
    const int64_t row = batch.node_ids[static_cast<size_t>(batch.edge_dst[e])];
    CHECK(train_set.count(row) == 1);
  }
  for (const auto& [t, count] : per_target) CHECK(count == 5);

  auto empty = make_batch(ds, &graph, targets, mcfg, 0, pool, rng);
  CHECK(empty.edge_src.empty());
  CHECK(empty.n_gathered == empty.n_targets);
}

TEST_CASE("training smoke run halves the loss and stays in budget") {
  Dataset ds = tiny_dataset(40, 7, 2.0);
  SimilarityParams gp;
  const PatientGraph graph = build_knn_graph(ds.diag, gp);

  ModelConfig mcfg;
  mcfg.gnn = GnnKind::Sage;
  mcfg.task = Task::Los;
  mcfg.lstm_hidden = 8;
  mcfg.gnn_hidden = 8;
  mcfg.gnn_out = 8;
  mcfg.static_hidden = 8;
  mcfg.in_channels = ds.channels;
  mcfg.static_width = ds.static_width;
  TrainConfig tcfg;
  tcfg.seed = 2;
  tcfg.batch_size = 16;

  LstmGnnModel model(mcfg, tcfg.seed);
  const auto result = train(model, ds, &graph, tcfg);
  REQUIRE(!result.log.empty());
  CHECK(result.epochs_run <= 25);
  CHECK(result.log.back().train_loss < 0.5 * result.log.front().train_loss);

  // every id sampled during training stays inside the train split
  const std::set<int64_t> train_set(ds.train_rows.begin(),
                                    ds.train_rows.end());
  for (int64_t id : result.train_sampled_ids) CHECK(train_set.count(id) == 1);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  Dataset ds = tiny_dataset(30, 9);
  SimilarityParams gp;
  const PatientGraph graph = build_knn_graph(ds.diag, gp);
  ModelConfig mcfg;
  mcfg.gnn = GnnKind::Gcn;
  mcfg.task = Task::Los;
  mcfg.in_channels = ds.channels;
  mcfg.static_width = ds.static_width;
  TrainConfig tcfg;
  tcfg.lr = 0.0;
  tcfg.max_epochs = 2;
  tcfg.seed = 3;

  LstmGnnModel model(mcfg, tcfg.seed);
  const auto before = model.clone_params();
  (void)train(model, ds, &graph, tcfg);
  for (const auto& [name, t] : model.params()) {
    const auto& orig = before.at(name);
    for (int64_t i = 0; i < t.size(); ++i)
      CHECK(t.data()[static_cast<size_t>(i)] ==
            orig.data()[static_cast<size_t>(i)]);
  }
}

TEST_CASE("same seed reproduces the epoch log bit for bit") {
  Dataset ds = tiny_dataset(36, 11);
  SimilarityParams gp;
  const PatientGraph graph = build_knn_graph(ds.diag, gp);
  ModelConfig mcfg;
  mcfg.gnn = GnnKind::Gat;
  mcfg.task = Task::Los;
  mcfg.in_channels = ds.channels;
  mcfg.static_width = ds.static_width;
  TrainConfig tcfg;
  tcfg.seed = 17;
  tcfg.max_epochs = 4;

  const auto run = [&] {
    LstmGnnModel model(mcfg, tcfg.seed);
    return train(model, ds, &graph, tcfg);
  };
  const auto r1 = run();
  const auto r2 = run();
  REQUIRE(r1.log.size() == r2.log.size());
  for (size_t e = 0; e < r1.log.size(); ++e) {
    CHECK(r1.log[e].train_loss == r2.log[e].train_loss);
    CHECK(r1.log[e].val_loss == r2.log[e].val_loss);
    CHECK(r1.log[e].val_metric == r2.log[e].val_metric);
  }
}

TEST_CASE("early stopping restores the best validation parameters") {
  Dataset ds = tiny_dataset(50, 13);
  SimilarityParams gp;
  const PatientGraph graph = build_knn_graph(ds.diag, gp);
  ModelConfig mcfg;
  mcfg.gnn = GnnKind::Sage;
  mcfg.task = Task::Los;
  mcfg.in_channels = ds.channels;
  mcfg.static_width = ds.static_width;
  TrainConfig tcfg;
  tcfg.seed = 19;
  tcfg.lr = 0.02;  // deliberately twitchy so validation loss oscillates

  LstmGnnModel model(mcfg, tcfg.seed);
  const auto result = train(model, ds, &graph, tcfg);

  double best_logged = result.log[0].val_loss;
  for (const auto& e : result.log)
    best_logged = std::min(best_logged, e.val_loss);
  CHECK(result.best_val_loss == doctest::Approx(best_logged));
  for (const auto& e : result.log) CHECK(result.best_val_loss <= e.val_loss);
}

TEST_CASE("inductive evaluation covers exactly the requested rows") {
  Dataset ds = tiny_dataset(45, 21);
  SimilarityParams gp;
  const PatientGraph graph = build_knn_graph(ds.diag, gp);
  ModelConfig mcfg;
  mcfg.gnn = GnnKind::Gcn;
  mcfg.task = Task::Los;
  mcfg.in_channels = ds.channels;
  mcfg.static_width = ds.static_width;
  TrainConfig tcfg;
  tcfg.seed = 23;
  tcfg.max_epochs = 2;

  LstmGnnModel model(mcfg, tcfg.seed);
  (void)train(model, ds, &graph, tcfg);
  const auto res = evaluate_inductive(model, ds, &graph, ds.test_rows, tcfg);
  CHECK(res.evaluated_rows == ds.test_rows);
  CHECK(res.y_pred.size() == ds.test_rows.size());
  CHECK(res.report.n == static_cast<int64_t>(ds.test_rows.size()));

  const auto again = evaluate_inductive(model, ds, &graph, ds.test_rows, tcfg);
  CHECK(again.y_pred == res.y_pred);

  const std::vector<int64_t> empty;
  CHECK_THROWS_AS(evaluate_inductive(model, ds, &graph, empty, tcfg),
                  ContractError);
}
