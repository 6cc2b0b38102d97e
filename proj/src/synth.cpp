#include "encdecad/synth.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "encdecad/errors.hpp"

namespace encdecad::data {

TimeSeriesFrame generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.channels < 1) throw ConfigError("synthetic: channels must be >= 1");
  if (spec.window_len < 2) throw ConfigError("synthetic: window_len must be >= 2");
  if (spec.normal_windows < 1) throw ConfigError("synthetic: need at least one normal window");
  if (spec.anomalous_windows < 0) throw ConfigError("synthetic: anomalous_windows must be >= 0");
  if (spec.spike_len < 1 || spec.spike_len > spec.window_len)
    throw ConfigError("synthetic: spike_len must be in [1, window_len]");
  if (spec.noise_stddev < 0.0) throw ConfigError("synthetic: noise_stddev must be >= 0");

  const Index total = spec.normal_windows + spec.anomalous_windows;
  const Index len = spec.window_len;
  numerics::Rng rng(seed);

  // Spread the anomalous windows over random slots instead of appending them,
  // so each split set sees a representative mix.
  std::vector<std::size_t> slots(static_cast<std::size_t>(total));
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  rng.shuffle(slots);
  std::vector<std::uint8_t> is_anomalous(static_cast<std::size_t>(total), 0);
  for (Index k = 0; k < spec.anomalous_windows; ++k) is_anomalous[slots[static_cast<std::size_t>(k)]] = 1;

  TimeSeriesFrame frame;
  frame.series_id = "synthetic";
  frame.values.resize(total * len, spec.channels);
  frame.labels.assign(static_cast<std::size_t>(total * len), 0);

  for (Index w = 0; w < total; ++w) {
    Index spike_begin = -1;
    if (is_anomalous[static_cast<std::size_t>(w)]) {
      spike_begin = static_cast<Index>(rng.below(static_cast<std::uint64_t>(len - spec.spike_len + 1)));
      for (Index p = spike_begin; p < spike_begin + spec.spike_len; ++p)
        frame.labels[static_cast<std::size_t>(w * len + p)] = 1;
    }
    for (Index p = 0; p < len; ++p) {
      const Index t = w * len + p;
      double base =
          spec.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(p) / static_cast<double>(len));
      if (spike_begin >= 0 && p >= spike_begin && p < spike_begin + spec.spike_len) base *= spec.spike_scale;
      for (Index c = 0; c < spec.channels; ++c) {
        // Fixed per-channel mixing keeps the shared signal dominant on every
        // channel while avoiding collinearity once noise is added.
        const double mix = (c % 2 == 0 ? 1.0 : -1.0) / (1.0 + 0.5 * static_cast<double>(c));
        frame.values(t, c) = mix * base + spec.noise_stddev * rng.gaussian();
      }
    }
  }

  frame.anomalous_intervals.clear();
  Index t = 0;
  const Index n = frame.length();
  while (t < n) {
    if (frame.labels[static_cast<std::size_t>(t)]) {
      Index end = t;
      while (end < n && frame.labels[static_cast<std::size_t>(end)]) ++end;
      frame.anomalous_intervals.push_back({t, end});
      t = end;
    } else {
      ++t;
    }
  }
  return frame;
}

}  // namespace encdecad::data
