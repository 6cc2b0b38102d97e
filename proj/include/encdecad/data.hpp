#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "encdecad/numerics.hpp"

namespace encdecad::data {

using numerics::Index;
using numerics::Matrix;
using numerics::Vector;

/// Half-open index range [start, end).
struct Interval {
  Index start = 0;
  Index end = 0;
};

struct TimeSeriesFrame {
  std::string series_id;
  Matrix values;                     // T x m, one row per timestep
  std::vector<std::uint8_t> labels;  // empty when unlabeled, else length T; 1 = anomalous
  std::vector<Interval> anomalous_intervals;

  Index length() const { return values.rows(); }
  Index channels() const { return values.cols(); }
  bool has_labels() const { return !labels.empty(); }
};

struct CsvSchema {
  enum class Header { kAuto, kYes, kNo };
  char delimiter = ',';
  Header header = Header::kAuto;
  std::vector<Index> use_columns;  // empty = keep all columns
};

// Rows are timesteps, columns are channels. Malformed rows are rejected with
// their line number. series_id defaults to the file stem.
TimeSeriesFrame load_csv(const std::filesystem::path& path, const CsvSchema& schema = {},
                         std::string series_id = {});

struct LabeledInterval {
  std::string series_id;  // empty matches any series
  Interval interval;
};

/// Rows: "series_id,start,end" or "start,end"; header detected automatically.
std::vector<LabeledInterval> load_intervals_csv(const std::filesystem::path& path);

/// Marks frame points inside matching intervals as anomalous.
void apply_intervals(TimeSeriesFrame& frame, const std::vector<LabeledInterval>& intervals);

/// Keeps [start, end) of the frame; labels and intervals follow.
TimeSeriesFrame crop(const TimeSeriesFrame& frame, Index start, std::optional<Index> end = {});

// Non-overlapping blocks of `factor` points become their per-channel mean;
// the trailing remainder is dropped. A block is anomalous if any member is.
TimeSeriesFrame downsample(const TimeSeriesFrame& frame, Index factor);

/// Like downsample but keeps each block's first sample instead of the mean.
TimeSeriesFrame decimate(const TimeSeriesFrame& frame, Index factor);

struct Window {
  Matrix values;  // L x m
  bool anomalous = false;
  std::string series_id;
  Index start = 0;  // start index within the source frame
};

using WindowSet = std::vector<Window>;

// Windows start at 0, step, 2*step, ... while start + L <= T. A window is
// anomalous iff its source range contains an anomalous point.
WindowSet make_windows(const TimeSeriesFrame& frame, Index window_len, Index step);

struct NormalizationStats {
  Vector mean;
  Vector stddev;                       // population stddev; 1.0 for constant channels
  std::vector<std::uint8_t> constant;  // channels passed through unscaled
};

/// Per-channel stats pooled over every point of the given (training) windows.
NormalizationStats fit_normalization(const WindowSet& train_windows);
Matrix apply_normalization(const Eigen::Ref<const Matrix>& values, const NormalizationStats& stats);
Matrix invert_normalization(const Eigen::Ref<const Matrix>& values, const NormalizationStats& stats);
void normalize_windows(WindowSet& windows, const NormalizationStats& stats);

struct PcaReducer {
  numerics::PrincipalComponent component;
  Vector fit_mean;  // mean of the points the component was fit on
};

PcaReducer fit_pca(const Eigen::Ref<const Matrix>& points);
PcaReducer fit_pca(const WindowSet& train_windows);

/// Projects each point onto the component: value = direction . (x - fit_mean).
Matrix project_to_pc(const Eigen::Ref<const Matrix>& values, const PcaReducer& reducer);
TimeSeriesFrame reduce_to_first_pc(const TimeSeriesFrame& frame, const PcaReducer& reducer);
void reduce_windows(WindowSet& windows, const PcaReducer& reducer);

/// Positions of each subset within the shuffled inputs of split().
struct SplitIndices {
  std::vector<std::size_t> s_n, v_n1, v_n2, t_n;
  std::vector<std::size_t> v_a, t_a;
};

SplitIndices split_indices(std::size_t normal_count, std::size_t anomalous_count,
                           const std::array<double, 4>& normal_ratios,
                           const std::array<double, 2>& anomalous_ratios, std::uint64_t seed);

struct DatasetSplit {
  WindowSet s_n, v_n1, v_n2, t_n;
  WindowSet v_a, t_a;
  std::array<double, 4> normal_ratios{};
  std::array<double, 2> anomalous_ratios{};
  std::uint64_t seed = 0;
};

// Seeded shuffle then contiguous partition by the cumulative ratios. Normal
// inputs must all be labeled normal, anomalous inputs anomalous.
DatasetSplit split(const WindowSet& normal, const WindowSet& anomalous,
                   const std::array<double, 4>& normal_ratios,
                   const std::array<double, 2>& anomalous_ratios, std::uint64_t seed);

struct DatasetManifest {
  std::string name;
  std::string periodicity;
  std::optional<bool> predictable;
  Index dimensions = 0;  // channels of the raw input
  int original_sequences = 0;
  int normal_subsequences = 0;
  int anomalous_subsequences = 0;
};

}  // namespace encdecad::data
