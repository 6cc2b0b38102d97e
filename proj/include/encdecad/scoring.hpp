#pragma once

#include <vector>

#include "encdecad/data.hpp"
#include "encdecad/lstm.hpp"

namespace encdecad::scoring {

using numerics::Index;
using numerics::Matrix;
using numerics::Vector;

/// Per-position absolute reconstruction error with its provenance.
struct ErrorVector {
  Vector abs_error;  // m entries: |x - x'|
  Index window_id = 0;
  Index position = 0;  // 0-based position within the window
};

struct GaussianErrorModel {
  Vector mean;
  Matrix covariance;  // maximum-likelihood estimate (divides by N)
  numerics::SpdFactorization factorization;
  Index sample_count = 0;

  Index dim() const { return mean.size(); }
};

std::vector<ErrorVector> error_vectors(const Eigen::Ref<const Matrix>& window,
                                       const lstm::Reconstruction& reconstruction, Index window_id = 0);

/// Reconstructs every window and pools the error vectors.
std::vector<ErrorVector> collect_error_vectors(const lstm::EncDecModel& model,
                                               const data::WindowSet& windows, lstm::DecodeMode mode);

/// Needs at least dim + 1 samples; the covariance is regularized as required.
GaussianErrorModel fit_error_model(const std::vector<ErrorVector>& errors);

/// Squared Mahalanobis distance of the error from the fitted mean; >= 0.
double anomaly_score(const GaussianErrorModel& model, const Eigen::Ref<const Vector>& error);

struct WindowScores {
  Index window_id = 0;
  Vector scores;  // one per window position
};

struct ScoreSeries {
  std::vector<WindowScores> windows;
  std::vector<double> flatten() const;  // window order, position order inside
};

ScoreSeries score_windows(const lstm::EncDecModel& model, const GaussianErrorModel& error_model,
                          const data::WindowSet& windows,
                          lstm::DecodeMode mode = lstm::DecodeMode::kAutoregressive);

}  // namespace encdecad::scoring
