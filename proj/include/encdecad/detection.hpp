#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace encdecad::detection {

using PointLabels = std::vector<std::uint8_t>;

// (1 + b^2) P R / (b^2 P + R), defined as 0 when both P and R are 0.
double f_beta(double precision, double recall, double beta);

enum class ThresholdMethod { kSupervised, kUnsupervised };

struct Threshold {
  double tau = 0.0;
  ThresholdMethod method = ThresholdMethod::kSupervised;
  std::optional<double> beta;           // supervised
  std::optional<int> candidate_count;   // supervised
  std::optional<double> best_f_beta;    // supervised
  std::optional<double> score_mean;     // unsupervised
  std::optional<double> score_stddev;   // unsupervised
};

// Exhausts every decision boundary: the sorted unique scores plus max + 1.
// Maximizes F_beta of the strict rule score > tau; ties pick the largest tau.
Threshold select_threshold_supervised(const std::vector<double>& scores, const PointLabels& truth,
                                      double beta);

/// tau = mean + population stddev of the (normal validation) scores.
Threshold select_threshold_unsupervised(const std::vector<double>& scores);

/// 1 where score > tau.
PointLabels classify(const std::vector<double>& scores, double tau);

struct Metrics {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double beta = 0.0;
  double f_beta_score = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double plr = 0.0;  // tpr / fpr; +inf when fpr = 0 < tpr, NaN when both are 0
};

Metrics evaluate(const PointLabels& predicted, const PointLabels& truth, double beta);

/// Aligned text table, one row per entry, in the given order.
struct MetricsRow {
  std::string dataset;
  long window_len = 0;
  long hidden_units = 0;
  Metrics metrics;
};

std::string format_metrics_table(const std::vector<MetricsRow>& rows);

}  // namespace encdecad::detection
