#include "encdecad/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "encdecad/errors.hpp"

namespace encdecad::svg {
namespace {

constexpr int kMarginLeft = 56;
constexpr int kMarginRight = 16;
constexpr int kMarginTop = 28;
constexpr int kMarginBottom = 18;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_panels(const std::vector<Panel>& panels, int width, int panel_height) {
  const int height = static_cast<int>(panels.size()) * panel_height;
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                "font-family=\"monospace\" font-size=\"11\">\n",
                width, height);
  out += buf;
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  const double plot_w = width - kMarginLeft - kMarginRight;
  const double plot_h = panel_height - kMarginTop - kMarginBottom;

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Panel& panel = panels[p];
    const double top = static_cast<double>(p) * panel_height + kMarginTop;

    std::size_t samples = 0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const Series& s : panel.series) {
      samples = std::max(samples, s.y.size());
      for (double v : s.y) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (samples == 0 || !std::isfinite(lo)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-12) {  // flat series still needs a visible band
      hi += 0.5;
      lo -= 0.5;
    }

    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%.1f\" font-weight=\"bold\">%s</text>\n",
                  kMarginLeft, top - 10.0, escape(panel.title).c_str());
    out += buf;
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%d\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" "
                  "stroke=\"#cccccc\"/>\n",
                  kMarginLeft, top, plot_w, plot_h);
    out += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%.1f\" text-anchor=\"end\">%s</text>\n",
                  kMarginLeft - 4, top + 10.0, fmt(hi).c_str());
    out += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%.1f\" text-anchor=\"end\">%s</text>\n",
                  kMarginLeft - 4, top + plot_h, fmt(lo).c_str());
    out += buf;

    double legend_x = kMarginLeft + 8.0;
    for (const Series& s : panel.series) {
      if (s.y.empty()) continue;
      std::string points;
      const double denom = s.y.size() > 1 ? static_cast<double>(s.y.size() - 1) : 1.0;
      for (std::size_t i = 0; i < s.y.size(); ++i) {
        const double x = kMarginLeft + plot_w * static_cast<double>(i) / denom;
        double v = std::clamp(s.y[i], lo, hi);
        const double y = top + plot_h * (1.0 - (v - lo) / (hi - lo));
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x, y);
        points += buf;
      }
      std::snprintf(buf, sizeof buf,
                    "<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"1.2\" points=\"%s\"/>\n",
                    s.color.c_str(), points.c_str());
      out += buf;
      if (!s.label.empty()) {
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" fill=\"%s\">%s</text>\n", legend_x,
                      top + plot_h + 14.0, s.color.c_str(), escape(s.label).c_str());
        out += buf;
        legend_x += 10.0 * (s.label.size() + 3);
      }
    }
  }
  out += "</svg>\n";
  return out;
}

void write_window_plot(const std::filesystem::path& path, const numerics::Matrix& original,
                       const numerics::Matrix& reconstruction, const numerics::Vector& scores,
                       const std::string& title) {
  if (original.rows() != reconstruction.rows() || original.rows() != scores.size())
    throw NumericError("write_window_plot: lengths disagree");

  auto column = [](const numerics::Matrix& m) {
    return std::vector<double>(m.col(0).data(), m.col(0).data() + m.rows());
  };

  std::vector<double> log_scores(static_cast<std::size_t>(scores.size()));
  for (numerics::Index i = 0; i < scores.size(); ++i)
    log_scores[static_cast<std::size_t>(i)] = std::log10(std::max(scores(i), 1e-12));

  Panel value_panel{title + ": signal (channel 0)",
                    {Series{column(original), "#1f5fbf", "original"},
                     Series{column(reconstruction), "#2e8b57", "reconstruction"}}};
  Panel score_panel{"log10 anomaly score", {Series{log_scores, "#c03030", ""}}};

  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << render_panels({value_panel, score_panel});
}

}  // namespace encdecad::svg
