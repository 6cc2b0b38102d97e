#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "encdecad/numerics.hpp"

namespace encdecad::svg {

struct Series {
  std::vector<double> y;
  std::string color;
  std::string label;
};

struct Panel {
  std::string title;
  std::vector<Series> series;
};

/// Vertically stacked line-chart panels sharing the x axis (sample index).
std::string render_panels(const std::vector<Panel>& panels, int width = 760, int panel_height = 170);

// One window: a signal panel overlaying original (channel 0) and its
// reconstruction on a shared scale, plus a log10 anomaly-score panel.
void write_window_plot(const std::filesystem::path& path, const numerics::Matrix& original,
                       const numerics::Matrix& reconstruction, const numerics::Vector& scores,
                       const std::string& title);

}  // namespace encdecad::svg
