#include "encdecad/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "encdecad/errors.hpp"

namespace encdecad::scoring {

std::vector<ErrorVector> error_vectors(const Eigen::Ref<const Matrix>& window,
                                       const lstm::Reconstruction& reconstruction, Index window_id) {
  if (reconstruction.values.rows() != window.rows() || reconstruction.values.cols() != window.cols())
    throw NumericError("error_vectors: reconstruction shape does not match the window");
  std::vector<ErrorVector> out;
  out.reserve(static_cast<std::size_t>(window.rows()));
  for (Index i = 0; i < window.rows(); ++i) {
    ErrorVector e;
    e.abs_error = (window.row(i) - reconstruction.values.row(i)).cwiseAbs().transpose();
    e.window_id = window_id;
    e.position = i;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ErrorVector> collect_error_vectors(const lstm::EncDecModel& model,
                                               const data::WindowSet& windows, lstm::DecodeMode mode) {
  std::vector<ErrorVector> pooled;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const lstm::Reconstruction rec = lstm::reconstruct(model, windows[i].values, mode);
    auto errs = error_vectors(windows[i].values, rec, static_cast<Index>(i));
    pooled.insert(pooled.end(), std::make_move_iterator(errs.begin()), std::make_move_iterator(errs.end()));
  }
  return pooled;
}

GaussianErrorModel fit_error_model(const std::vector<ErrorVector>& errors) {
  if (errors.empty()) throw DataError("fit_error_model: no error vectors");
  const Index m = errors.front().abs_error.size();
  const auto n = static_cast<Index>(errors.size());
  if (n < m + 1)
    throw DataError("fit_error_model: need at least " + std::to_string(m + 1) + " error vectors for dim " +
                    std::to_string(m) + ", got " + std::to_string(n));

  Matrix samples(n, m);
  for (Index i = 0; i < n; ++i) {
    if (errors[static_cast<std::size_t>(i)].abs_error.size() != m)
      throw DataError("fit_error_model: error vectors disagree on dimension");
    samples.row(i) = errors[static_cast<std::size_t>(i)].abs_error.transpose();
  }

  GaussianErrorModel model;
  model.mean = numerics::column_means(samples);
  model.covariance = numerics::covariance(samples);
  model.sample_count = n;
  const double base = 1e-9 * model.covariance.diagonal().mean();
  model.factorization = numerics::factor_spd(model.covariance, std::max(base, 0.0));
  return model;
}

double anomaly_score(const GaussianErrorModel& model, const Eigen::Ref<const Vector>& error) {
  if (error.size() != model.dim())
    throw NumericError("anomaly_score: error has dim " + std::to_string(error.size()) + ", model expects " +
                       std::to_string(model.dim()));
  const Vector centered = error - model.mean;
  const double score = centered.dot(numerics::solve_spd(model.factorization, centered));
  // Rounding can push a near-zero quadratic form fractionally negative.
  return std::max(score, 0.0);
}

std::vector<double> ScoreSeries::flatten() const {
  std::vector<double> out;
  for (const WindowScores& w : windows)
    out.insert(out.end(), w.scores.data(), w.scores.data() + w.scores.size());
  return out;
}

ScoreSeries score_windows(const lstm::EncDecModel& model, const GaussianErrorModel& error_model,
                          const data::WindowSet& windows, lstm::DecodeMode mode) {
  ScoreSeries series;
  series.windows.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const lstm::Reconstruction rec = lstm::reconstruct(model, windows[i].values, mode);
    WindowScores ws;
    ws.window_id = static_cast<Index>(i);
    ws.scores.resize(windows[i].values.rows());
    for (Index p = 0; p < windows[i].values.rows(); ++p) {
      const Vector err = (windows[i].values.row(p) - rec.values.row(p)).cwiseAbs().transpose();
      ws.scores(p) = anomaly_score(error_model, err);
    }
    series.windows.push_back(std::move(ws));
  }
  return series;
}

}  // namespace encdecad::scoring
