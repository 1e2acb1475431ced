#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "lgnn/errors.hpp"

namespace lgnn {

enum class Task { Ihm, Los };

std::string task_name(Task t);
Task parse_task(const std::string& s);

struct RegressionMetrics {
  double mad = 0.0;
  double mape = 0.0;
  double mse = 0.0;
  double msle = 0.0;
  double r2 = 0.0;
};

// Per-run evaluation report. For IHM only auroc/auprc are populated, for
// LOS only the regression block and kappa.
struct MetricsReport {
  Task task = Task::Ihm;
  int64_t n = 0;
  double auroc = 0.0;
  double auprc = 0.0;
  RegressionMetrics reg;
  double kappa = 0.0;

  // name -> value, in a fixed order suitable for report files
  std::vector<std::pair<std::string, double>> entries() const;
};

// Probability that a random positive outranks a random negative, ties 1/2.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Average precision over descending-score thresholds; tied scores form one
// threshold block.
double auprc(std::span<const double> scores, std::span<const int> labels);

RegressionMetrics regression_metrics(std::span<const double> y_pred,
                                     std::span<const double> y_true);

// Bucket boundaries are upper edges; value v falls into the first bin with
// v <= edge, the last bin is open-ended.
std::vector<double> default_los_bin_edges();

double linear_weighted_kappa(std::span<const double> y_pred,
                             std::span<const double> y_true,
                             std::span<const double> bin_edges);

MetricsReport compute_report(Task task, std::span<const double> y_pred,
                             std::span<const double> y_true);

struct RunAggregate {
  // metric -> (mean, half-width of the 95% t confidence interval)
  std::map<std::string, std::pair<double, double>> metrics;
  int64_t runs = 0;
};

RunAggregate aggregate_runs(const std::vector<MetricsReport>& reports);
RunAggregate aggregate_runs(
    const std::vector<std::vector<std::pair<std::string, double>>>& rows);

// Two-sample two-tailed Welch t-test p-value.
double t_test_p(std::span<const double> a, std::span<const double> b);

// Paired two-tailed t-test p-value on a[i] - b[i].
double paired_t_test_p(std::span<const double> a, std::span<const double> b);

}  // namespace lgnn
