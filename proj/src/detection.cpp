#include "encdecad/detection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "encdecad/errors.hpp"

namespace encdecad::detection {

double f_beta(double precision, double recall, double beta) {
  if (precision < 0.0 || precision > 1.0 || recall < 0.0 || recall > 1.0)
    throw NumericError("f_beta: precision and recall must be in [0, 1]");
  if (beta <= 0.0) throw ConfigError("f_beta: beta must be > 0");
  const double denom = beta * beta * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + beta * beta) * precision * recall / denom;
}

Threshold select_threshold_supervised(const std::vector<double>& scores, const PointLabels& truth,
                                      double beta) {
  if (scores.size() != truth.size())
    throw DataError("select_threshold_supervised: scores and labels differ in length");
  if (scores.empty()) throw DataError("select_threshold_supervised: empty input");
  if (beta <= 0.0) throw ConfigError("select_threshold_supervised: beta must be > 0");

  std::int64_t positives = 0;
  for (std::uint8_t t : truth) positives += (t != 0);
  const auto n = static_cast<std::int64_t>(scores.size());
  if (positives == 0 || positives == n)
    throw NumericError("degenerate validation set: needs at least one anomalous and one normal point");

  // Sort score/label pairs ascending, then count positives and negatives in
  // every suffix; a candidate tau predicts exactly one suffix positive.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::vector<std::int64_t> suffix_pos(scores.size() + 1, 0);
  for (std::size_t i = scores.size(); i-- > 0;)
    suffix_pos[i] = suffix_pos[i + 1] + (truth[order[i]] != 0);

  Threshold best;
  best.method = ThresholdMethod::kSupervised;
  best.beta = beta;
  double best_f = -1.0;
  double best_tau = 0.0;
  int candidates = 0;

  auto consider = [&](double tau, std::size_t first_above) {
    ++candidates;
    const std::int64_t tp = suffix_pos[first_above];
    const std::int64_t predicted = n - static_cast<std::int64_t>(first_above);
    const double p = predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    const double r = static_cast<double>(tp) / static_cast<double>(positives);
    const double f = f_beta(p, r, beta);
    // Candidates arrive in ascending tau order, so >= keeps the largest tau
    // among exact ties.
    if (f >= best_f) {
      best_f = f;
      best_tau = tau;
    }
  };

  for (std::size_t i = 0; i < scores.size();) {
    const double value = scores[order[i]];
    std::size_t j = i;
    while (j < scores.size() && scores[order[j]] == value) ++j;
    consider(value, j);  // predictions are strictly above tau
    i = j;
  }
  consider(scores[order.back()] + 1.0, scores.size());  // nothing predicted positive

  best.tau = best_tau;
  best.best_f_beta = best_f;
  best.candidate_count = candidates;
  return best;
}

Threshold select_threshold_unsupervised(const std::vector<double>& scores) {
  if (scores.size() < 2)
    throw DataError("select_threshold_unsupervised: need at least two scores");
  const auto n = static_cast<double>(scores.size());
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var /= n;  // population variance
  Threshold out;
  out.method = ThresholdMethod::kUnsupervised;
  out.score_mean = mean;
  out.score_stddev = std::sqrt(var);
  out.tau = mean + *out.score_stddev;
  return out;
}

PointLabels classify(const std::vector<double>& scores, double tau) {
  PointLabels out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > tau ? 1 : 0;
  return out;
}

Metrics evaluate(const PointLabels& predicted, const PointLabels& truth, double beta) {
  if (predicted.size() != truth.size())
    throw DataError("evaluate: prediction and truth differ in length");
  if (predicted.empty()) throw DataError("evaluate: no points");
  Metrics m;
  m.beta = beta;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] != 0;
    const bool t = truth[i] != 0;
    if (p && t)
      ++m.tp;
    else if (p && !t)
      ++m.fp;
    else if (!p && t)
      ++m.fn;
    else
      ++m.tn;
  }
  m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.tpr = m.recall;
  m.fpr = m.fp + m.tn > 0 ? static_cast<double>(m.fp) / static_cast<double>(m.fp + m.tn) : 0.0;
  m.f_beta_score = f_beta(m.precision, m.recall, beta);
  if (m.fpr > 0.0)
    m.plr = m.tpr / m.fpr;
  else if (m.tpr > 0.0)
    m.plr = std::numeric_limits<double>::infinity();
  else
    m.plr = std::numeric_limits<double>::quiet_NaN();
  return m;
}

std::string format_metrics_table(const std::vector<MetricsRow>& rows) {
  auto plr_text = [](double plr) -> std::string {
    if (std::isnan(plr)) return "undef";
    if (std::isinf(plr)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", plr);
    return buf;
  };

  std::string out = "dataset                 L      c   beta      P      R  F-beta  TPR/FPR\n";
  for (const MetricsRow& row : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-20s %4ld %6ld %6.2f %6.2f %6.2f %7.2f %8s\n", row.dataset.c_str(),
                  row.window_len, row.hidden_units, row.metrics.beta, row.metrics.precision,
                  row.metrics.recall, row.metrics.f_beta_score, plr_text(row.metrics.plr).c_str());
    out += buf;
  }
  return out;
}

}  // namespace encdecad::detection
