#include "lgnn/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lgnn {

std::string task_name(Task t) { return t == Task::Ihm ? "ihm" : "los"; }

Task parse_task(const std::string& s) {
  if (s == "ihm") return Task::Ihm;
  if (s == "los") return Task::Los;
  throw ConfigError("unknown task '" + s + "' (expected ihm or los)");
}

std::vector<std::pair<std::string, double>> MetricsReport::entries() const {
  if (task == Task::Ihm)
    return {{"auroc", auroc}, {"auprc", auprc}};
  return {{"mad", reg.mad},   {"mape", reg.mape}, {"mse", reg.mse},
          {"msle", reg.msle}, {"r2", reg.r2},     {"kappa", kappa}};
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ContractError("auroc: scores and labels differ in length");
  const size_t n = scores.size();
  size_t pos = 0;
  for (int l : labels) pos += static_cast<size_t>(l != 0);
  const size_t neg = n - pos;
  if (pos == 0 || neg == 0)
    throw MetricError("auroc undefined: labels contain a single class");

  // rank-sum with midranks for ties
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (size_t k = i; k < j; ++k)
      if (labels[order[k]] != 0) rank_sum_pos += midrank;
    i = j;
  }
  const double u = rank_sum_pos - static_cast<double>(pos) *
                                      (static_cast<double>(pos) + 1.0) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ContractError("auprc: scores and labels differ in length");
  const size_t n = scores.size();
  size_t pos = 0;
  for (int l : labels) pos += static_cast<size_t>(l != 0);
  if (pos == 0) throw MetricError("auprc undefined: no positive labels");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  size_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    size_t block_tp = 0, block_fp = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] != 0)
        ++block_tp;
      else
        ++block_fp;
      ++j;
    }
    tp += block_tp;
    fp += block_fp;
    const double precision =
        static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += precision * static_cast<double>(block_tp) / static_cast<double>(pos);
    i = j;
  }
  return ap;
}

RegressionMetrics regression_metrics(std::span<const double> y_pred,
                                     std::span<const double> y_true) {
  if (y_pred.size() != y_true.size() || y_pred.empty())
    throw ContractError("regression_metrics: bad input sizes");
  const double n = static_cast<double>(y_true.size());
  RegressionMetrics m;
  double y_sum = 0.0;
  for (size_t i = 0; i < y_true.size(); ++i) {
    const double d = y_pred[i] - y_true[i];
    m.mad += std::abs(d);
    m.mape += std::abs(d) / std::max(y_true[i], 1e-4);
    m.mse += d * d;
    const double ld = std::log1p(y_pred[i]) - std::log1p(y_true[i]);
    m.msle += ld * ld;
    y_sum += y_true[i];
  }
  m.mad /= n;
  m.mape = 100.0 * m.mape / n;
  m.mse /= n;
  m.msle /= n;
  const double y_mean = y_sum / n;
  double ss_tot = 0.0;
  for (double y : y_true) ss_tot += (y - y_mean) * (y - y_mean);
  if (ss_tot == 0.0)
    throw MetricError("r2 undefined: constant ground truth");
  m.r2 = 1.0 - m.mse * n / ss_tot;
  return m;
}

std::vector<double> default_los_bin_edges() {
  // (0,1],(1,2],...,(7,8],(8,14],(14,inf): ten ordinal day buckets
  return {1, 2, 3, 4, 5, 6, 7, 8, 14};
}

namespace {

size_t bin_of(double v, std::span<const double> edges) {
  for (size_t b = 0; b < edges.size(); ++b)
    if (v <= edges[b]) return b;
  return edges.size();
}

}  // namespace

double linear_weighted_kappa(std::span<const double> y_pred,
                             std::span<const double> y_true,
                             std::span<const double> bin_edges) {
  if (y_pred.size() != y_true.size() || y_pred.empty())
    throw ContractError("kappa: bad input sizes");
  const size_t nbins = bin_edges.size() + 1;
  if (nbins < 2) throw ConfigError("kappa requires at least 2 bins");
  const double n = static_cast<double>(y_pred.size());

  std::vector<double> obs(nbins * nbins, 0.0);
  std::vector<double> row(nbins, 0.0), col(nbins, 0.0);
  for (size_t i = 0; i < y_pred.size(); ++i) {
    const size_t a = bin_of(y_pred[i], bin_edges);
    const size_t b = bin_of(y_true[i], bin_edges);
    obs[a * nbins + b] += 1.0;
    row[a] += 1.0;
    col[b] += 1.0;
  }
  double num = 0.0, den = 0.0;
  for (size_t a = 0; a < nbins; ++a)
    for (size_t b = 0; b < nbins; ++b) {
      const double w = std::abs(static_cast<double>(a) - static_cast<double>(b)) /
                       static_cast<double>(nbins - 1);
      num += w * obs[a * nbins + b];
      den += w * row[a] * col[b] / n;
    }
  if (den == 0.0) {
    // both raters constant: identical -> perfect agreement by convention
    if (num == 0.0) return 1.0;
    throw MetricError("kappa undefined: zero chance disagreement");
  }
  return 1.0 - num / den;
}

MetricsReport compute_report(Task task, std::span<const double> y_pred,
                             std::span<const double> y_true) {
  MetricsReport r;
  r.task = task;
  r.n = static_cast<int64_t>(y_pred.size());
  if (task == Task::Ihm) {
    std::vector<int> labels(y_true.size());
    for (size_t i = 0; i < y_true.size(); ++i) labels[i] = y_true[i] > 0.5;
    r.auroc = auroc(y_pred, labels);
    r.auprc = auprc(y_pred, labels);
  } else {
    r.reg = regression_metrics(y_pred, y_true);
    const auto edges = default_los_bin_edges();
    r.kappa = linear_weighted_kappa(y_pred, y_true, edges);
  }
  return r;
}

RunAggregate aggregate_runs(const std::vector<MetricsReport>& reports) {
  std::vector<std::vector<std::pair<std::string, double>>> rows;
  rows.reserve(reports.size());
  for (const auto& r : reports) rows.push_back(r.entries());
  return aggregate_runs(rows);
}

RunAggregate aggregate_runs(
    const std::vector<std::vector<std::pair<std::string, double>>>& rows) {
  if (rows.size() < 2)
    throw MetricError("confidence interval undefined for fewer than 2 runs");
  std::map<std::string, std::vector<double>> by_metric;
  for (const auto& row : rows)
    for (const auto& [name, value] : row) by_metric[name].push_back(value);

  RunAggregate agg;
  agg.runs = static_cast<int64_t>(rows.size());
  for (const auto& [name, values] : by_metric) {
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    double half = 0.0;
    if (values.size() > 1) {
      boost::math::students_t dist(n - 1.0);
      half = boost::math::quantile(dist, 0.975) * sd / std::sqrt(n);
    }
    agg.metrics[name] = {mean, half};
  }
  return agg;
}

namespace {

double two_tailed_p(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace

double t_test_p(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw MetricError("t-test requires at least 2 samples per group");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / na;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / nb;
  double va = 0.0, vb = 0.0;
  for (double v : a) va += (v - ma) * (v - ma);
  for (double v : b) vb += (v - mb) * (v - mb);
  va /= na - 1.0;
  vb /= nb - 1.0;
  const double se2 = va / na + vb / nb;
  if (se2 == 0.0) return ma == mb ? 1.0 : 0.0;
  const double t = (ma - mb) / std::sqrt(se2);
  // Welch-Satterthwaite degrees of freedom
  const double df = se2 * se2 / (va * va / (na * na * (na - 1.0)) +
                                 vb * vb / (nb * nb * (nb - 1.0)));
  return two_tailed_p(t, df);
}

double paired_t_test_p(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw MetricError("paired t-test requires matched samples, n >= 2");
  std::vector<double> d(a.size());
  for (size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double n = static_cast<double>(d.size());
  const double m = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : d) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) return m == 0.0 ? 1.0 : 0.0;
  return two_tailed_p(m / (sd / std::sqrt(n)), n - 1.0);
}

}  // namespace lgnn
