#pragma once

#include <cstdint>

#include "encdecad/data.hpp"

namespace encdecad::data {

// Periodic multi-channel signal built from windows of one sine period each.
// Anomalous windows scale the shared signal by spike_scale over spike_len
// consecutive points; those points are labeled.
struct SynthSpec {
  Index channels = 1;
  Index window_len = 30;
  Index normal_windows = 240;
  Index anomalous_windows = 40;
  double amplitude = 1.0;
  double noise_stddev = 0.05;
  double spike_scale = 3.0;
  Index spike_len = 5;
};

TimeSeriesFrame generate_synthetic(const SynthSpec& spec, std::uint64_t seed);

}  // namespace encdecad::data
