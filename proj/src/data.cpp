#include "encdecad/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "encdecad/errors.hpp"

namespace encdecad::data {
namespace {

std::string_view trimmed(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_line(std::string_view line, char delimiter) {
  std::vector<std::string_view> cells;
  std::size_t begin = 0;
  while (true) {
    std::size_t pos = line.find(delimiter, begin);
    if (pos == std::string_view::npos) {
      cells.push_back(trimmed(line.substr(begin)));
      break;
    }
    cells.push_back(trimmed(line.substr(begin, pos - begin)));
    begin = pos + 1;
  }
  return cells;
}

bool parse_double(std::string_view cell, double& out) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last && std::isfinite(out);
}

bool parse_index(std::string_view cell, Index& out) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

[[noreturn]] void fail_at(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw DataError(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<Interval> intervals_from_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<Interval> intervals;
  Index t = 0;
  const Index n = static_cast<Index>(labels.size());
  while (t < n) {
    if (labels[static_cast<std::size_t>(t)]) {
      Index end = t;
      while (end < n && labels[static_cast<std::size_t>(end)]) ++end;
      intervals.push_back({t, end});
      t = end;
    } else {
      ++t;
    }
  }
  return intervals;
}

Matrix pooled_points(const WindowSet& windows) {
  if (windows.empty()) throw DataError("cannot fit on an empty window set");
  const Index m = windows.front().values.cols();
  Index total = 0;
  for (const Window& w : windows) {
    if (w.values.cols() != m) throw DataError("windows disagree on channel count");
    total += w.values.rows();
  }
  Matrix points(total, m);
  Index row = 0;
  for (const Window& w : windows) {
    points.middleRows(row, w.values.rows()) = w.values;
    row += w.values.rows();
  }
  return points;
}

std::vector<std::size_t> take(const std::vector<std::size_t>& order, std::size_t begin, std::size_t end) {
  return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

void check_ratios(const double* ratios, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ratios[i] < 0.0) throw ConfigError("split ratios must be non-negative");
    sum += ratios[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

}  // namespace

TimeSeriesFrame load_csv(const std::filesystem::path& path, const CsvSchema& schema, std::string series_id) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());

  TimeSeriesFrame frame;
  frame.series_id = series_id.empty() ? path.stem().string() : std::move(series_id);

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_resolved = schema.header != CsvSchema::Header::kAuto;
  bool skip_next = schema.header == CsvSchema::Header::kYes;
  std::size_t width = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (trimmed(line).empty()) continue;
    auto cells = split_line(line, schema.delimiter);
    if (skip_next) {
      skip_next = false;
      continue;
    }
    std::vector<double> row(cells.size());
    bool numeric = true;
    std::size_t bad_col = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (!parse_double(cells[i], row[i])) {
        numeric = false;
        bad_col = i;
        break;
      }
    }
    if (!header_resolved) {
      header_resolved = true;
      if (!numeric) continue;  // first line is a header
    }
    if (!numeric)
      fail_at(path, line_no, "cell '" + std::string(cells[bad_col]) + "' in column " +
                                 std::to_string(bad_col + 1) + " is not a finite number");
    if (width == 0) width = row.size();
    if (row.size() != width)
      fail_at(path, line_no, "expected " + std::to_string(width) + " columns, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path.string() + ": no data rows");

  std::vector<Index> columns = schema.use_columns;
  if (columns.empty()) {
    columns.resize(width);
    std::iota(columns.begin(), columns.end(), Index{0});
  }
  for (Index c : columns)
    if (c < 0 || c >= static_cast<Index>(width))
      throw DataError(path.string() + ": column " + std::to_string(c) + " out of range (file has " +
                      std::to_string(width) + ")");

  frame.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(columns.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < columns.size(); ++c)
      frame.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][static_cast<std::size_t>(columns[c])];
  return frame;
}

std::vector<LabeledInterval> load_intervals_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());

  std::vector<LabeledInterval> intervals;
  std::string line;
  std::size_t line_no = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    auto body = trimmed(line);
    if (body.empty() || body.front() == '#') continue;
    auto cells = split_line(body, ',');
    if (cells.size() != 2 && cells.size() != 3)
      fail_at(path, line_no, "expected 'start,end' or 'series_id,start,end'");
    LabeledInterval item;
    std::size_t base = 0;
    if (cells.size() == 3) {
      item.series_id = std::string(cells[0]);
      base = 1;
    }
    if (!parse_index(cells[base], item.interval.start) || !parse_index(cells[base + 1], item.interval.end)) {
      if (first_content) {  // tolerate a header row
        first_content = false;
        continue;
      }
      fail_at(path, line_no, "interval bounds must be integers");
    }
    first_content = false;
    if (item.interval.start < 0 || item.interval.end <= item.interval.start)
      fail_at(path, line_no, "interval must satisfy 0 <= start < end");
    intervals.push_back(std::move(item));
  }
  return intervals;
}

void apply_intervals(TimeSeriesFrame& frame, const std::vector<LabeledInterval>& intervals) {
  bool any = false;
  for (const LabeledInterval& item : intervals)
    if (item.series_id.empty() || item.series_id == frame.series_id) any = true;
  if (!any) return;

  if (!frame.has_labels()) frame.labels.assign(static_cast<std::size_t>(frame.length()), 0);
  for (const LabeledInterval& item : intervals) {
    if (!item.series_id.empty() && item.series_id != frame.series_id) continue;
    if (item.interval.end > frame.length())
      throw DataError("interval [" + std::to_string(item.interval.start) + ", " +
                      std::to_string(item.interval.end) + ") exceeds series '" + frame.series_id +
                      "' of length " + std::to_string(frame.length()));
    for (Index t = item.interval.start; t < item.interval.end; ++t) frame.labels[static_cast<std::size_t>(t)] = 1;
  }
  frame.anomalous_intervals = intervals_from_labels(frame.labels);
}

TimeSeriesFrame crop(const TimeSeriesFrame& frame, Index start, std::optional<Index> end) {
  const Index stop = end.value_or(frame.length());
  if (start < 0 || stop > frame.length() || start > stop)
    throw DataError("crop [" + std::to_string(start) + ", " + std::to_string(stop) +
                    ") out of range for length " + std::to_string(frame.length()));
  TimeSeriesFrame out;
  out.series_id = frame.series_id;
  out.values = frame.values.middleRows(start, stop - start);
  if (frame.has_labels()) {
    out.labels.assign(frame.labels.begin() + start, frame.labels.begin() + stop);
    out.anomalous_intervals = intervals_from_labels(out.labels);
  }
  return out;
}

namespace {

// Shared block bookkeeping for downsample and decimate; only the value of a
// block differs between the two.
template <typename BlockValue>
TimeSeriesFrame blockwise(const TimeSeriesFrame& frame, Index factor, BlockValue&& value_of) {
  if (factor < 1) throw ConfigError("downsample factor must be >= 1");
  const Index blocks = frame.length() / factor;
  if (blocks == 0) throw DataError("series shorter than one downsample block");

  TimeSeriesFrame out;
  out.series_id = frame.series_id;
  out.values.resize(blocks, frame.channels());
  for (Index b = 0; b < blocks; ++b) out.values.row(b) = value_of(b);
  if (frame.has_labels()) {
    out.labels.assign(static_cast<std::size_t>(blocks), 0);
    for (Index b = 0; b < blocks; ++b)
      for (Index t = b * factor; t < (b + 1) * factor; ++t)
        if (frame.labels[static_cast<std::size_t>(t)]) out.labels[static_cast<std::size_t>(b)] = 1;
    out.anomalous_intervals = intervals_from_labels(out.labels);
  }
  return out;
}

}  // namespace

TimeSeriesFrame downsample(const TimeSeriesFrame& frame, Index factor) {
  return blockwise(frame, factor, [&](Index b) {
    return frame.values.middleRows(b * factor, factor).colwise().mean();
  });
}

TimeSeriesFrame decimate(const TimeSeriesFrame& frame, Index factor) {
  return blockwise(frame, factor, [&](Index b) { return frame.values.row(b * factor); });
}

WindowSet make_windows(const TimeSeriesFrame& frame, Index window_len, Index step) {
  if (window_len < 1) throw ConfigError("window length must be >= 1");
  if (step < 1) throw ConfigError("window step must be >= 1");
  if (window_len > frame.length())
    throw DataError("window length " + std::to_string(window_len) + " exceeds series '" + frame.series_id +
                    "' of length " + std::to_string(frame.length()));

  WindowSet windows;
  for (Index start = 0; start + window_len <= frame.length(); start += step) {
    Window w;
    w.values = frame.values.middleRows(start, window_len);
    w.series_id = frame.series_id;
    w.start = start;
    if (frame.has_labels())
      for (Index t = start; t < start + window_len; ++t)
        if (frame.labels[static_cast<std::size_t>(t)]) w.anomalous = true;
    windows.push_back(std::move(w));
  }
  return windows;
}

NormalizationStats fit_normalization(const WindowSet& train_windows) {
  const Matrix points = pooled_points(train_windows);
  const Index m = points.cols();
  NormalizationStats stats;
  stats.mean = numerics::column_means(points);
  stats.stddev.resize(m);
  stats.constant.assign(static_cast<std::size_t>(m), 0);
  for (Index c = 0; c < m; ++c) {
    const double var = (points.col(c).array() - stats.mean(c)).square().mean();
    const double sd = std::sqrt(var);
    if (sd < 1e-12 * std::max(1.0, std::abs(stats.mean(c)))) {
      stats.constant[static_cast<std::size_t>(c)] = 1;
      stats.stddev(c) = 1.0;
    } else {
      stats.stddev(c) = sd;
    }
  }
  return stats;
}

Matrix apply_normalization(const Eigen::Ref<const Matrix>& values, const NormalizationStats& stats) {
  if (values.cols() != stats.mean.size())
    throw DataError("normalization stats built for " + std::to_string(stats.mean.size()) +
                    " channels, got " + std::to_string(values.cols()));
  return (values.rowwise() - stats.mean.transpose()).array().rowwise() / stats.stddev.transpose().array();
}

Matrix invert_normalization(const Eigen::Ref<const Matrix>& values, const NormalizationStats& stats) {
  if (values.cols() != stats.mean.size())
    throw DataError("normalization stats built for " + std::to_string(stats.mean.size()) +
                    " channels, got " + std::to_string(values.cols()));
  return (values.array().rowwise() * stats.stddev.transpose().array()).matrix().rowwise() +
         stats.mean.transpose();
}

void normalize_windows(WindowSet& windows, const NormalizationStats& stats) {
  for (Window& w : windows) w.values = apply_normalization(w.values, stats);
}

PcaReducer fit_pca(const Eigen::Ref<const Matrix>& points) {
  PcaReducer reducer;
  reducer.component = numerics::leading_pc(points);
  reducer.fit_mean = numerics::column_means(points);
  return reducer;
}

PcaReducer fit_pca(const WindowSet& train_windows) { return fit_pca(pooled_points(train_windows)); }

Matrix project_to_pc(const Eigen::Ref<const Matrix>& values, const PcaReducer& reducer) {
  if (values.cols() != reducer.component.direction.size())
    throw DataError("pca reducer built for " + std::to_string(reducer.component.direction.size()) +
                    " channels, got " + std::to_string(values.cols()));
  return (values.rowwise() - reducer.fit_mean.transpose()) * reducer.component.direction;
}

TimeSeriesFrame reduce_to_first_pc(const TimeSeriesFrame& frame, const PcaReducer& reducer) {
  TimeSeriesFrame out;
  out.series_id = frame.series_id;
  out.values = project_to_pc(frame.values, reducer);
  out.labels = frame.labels;
  out.anomalous_intervals = frame.anomalous_intervals;
  return out;
}

void reduce_windows(WindowSet& windows, const PcaReducer& reducer) {
  for (Window& w : windows) w.values = project_to_pc(w.values, reducer);
}

SplitIndices split_indices(std::size_t normal_count, std::size_t anomalous_count,
                           const std::array<double, 4>& normal_ratios,
                           const std::array<double, 2>& anomalous_ratios, std::uint64_t seed) {
  check_ratios(normal_ratios.data(), normal_ratios.size());
  check_ratios(anomalous_ratios.data(), anomalous_ratios.size());

  numerics::Rng rng(seed);
  std::vector<std::size_t> normal_order(normal_count);
  std::iota(normal_order.begin(), normal_order.end(), std::size_t{0});
  rng.shuffle(normal_order);
  std::vector<std::size_t> anomalous_order(anomalous_count);
  std::iota(anomalous_order.begin(), anomalous_order.end(), std::size_t{0});
  rng.shuffle(anomalous_order);

  // Boundaries round the cumulative ratios so the parts always sum to the
  // input count; the final boundary is pinned to the end exactly.
  auto boundary = [](std::size_t n, double cumulative) {
    auto b = static_cast<std::size_t>(std::llround(cumulative * static_cast<double>(n)));
    return std::min(b, n);
  };
  std::array<std::size_t, 5> nb{0, 0, 0, 0, normal_count};
  double cum = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    cum += normal_ratios[i];
    nb[i + 1] = boundary(normal_count, cum);
  }
  for (std::size_t i = 1; i < 5; ++i) nb[i] = std::max(nb[i], nb[i - 1]);

  std::array<std::size_t, 3> ab{0, 0, anomalous_count};
  ab[1] = std::min(boundary(anomalous_count, anomalous_ratios[0]), anomalous_count);

  SplitIndices out;
  out.s_n = take(normal_order, nb[0], nb[1]);
  out.v_n1 = take(normal_order, nb[1], nb[2]);
  out.v_n2 = take(normal_order, nb[2], nb[3]);
  out.t_n = take(normal_order, nb[3], nb[4]);
  out.v_a = take(anomalous_order, ab[0], ab[1]);
  out.t_a = take(anomalous_order, ab[1], ab[2]);
  return out;
}

DatasetSplit split(const WindowSet& normal, const WindowSet& anomalous,
                   const std::array<double, 4>& normal_ratios,
                   const std::array<double, 2>& anomalous_ratios, std::uint64_t seed) {
  for (const Window& w : normal)
    if (w.anomalous) throw DataError("anomalous window passed in the normal pool");
  for (const Window& w : anomalous)
    if (!w.anomalous) throw DataError("normal window passed in the anomalous pool");

  const SplitIndices idx = split_indices(normal.size(), anomalous.size(), normal_ratios, anomalous_ratios, seed);
  auto gather = [](const WindowSet& pool, const std::vector<std::size_t>& which) {
    WindowSet out;
    out.reserve(which.size());
    for (std::size_t i : which) out.push_back(pool[i]);
    return out;
  };

  DatasetSplit out;
  out.s_n = gather(normal, idx.s_n);
  out.v_n1 = gather(normal, idx.v_n1);
  out.v_n2 = gather(normal, idx.v_n2);
  out.t_n = gather(normal, idx.t_n);
  out.v_a = gather(anomalous, idx.v_a);
  out.t_a = gather(anomalous, idx.t_a);
  out.normal_ratios = normal_ratios;
  out.anomalous_ratios = anomalous_ratios;
  out.seed = seed;
  return out;
}

}  // namespace encdecad::data
